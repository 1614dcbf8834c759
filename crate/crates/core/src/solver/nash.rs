use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Family, GameModel, InvestmentProfile, RiskFn, Shape};
use crate::numeric::root_decreasing;

/// Accepted own-FOC violation for a candidate equilibrium.
const NASH_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 20_000;
/// Largest model handled by support enumeration.
const ENUMERATION_LIMIT: usize = 12;

/// User `i`'s cost-minimising level when everyone else plays `x`.
pub fn best_response(model: &GameModel, i: usize, x: &InvestmentProfile) -> Result<f64> {
    if i >= model.n() || x.len() != model.n() {
        return Err(Error::invalid(format!(
            "best response of user {i} needs a profile of length {}",
            model.n()
        )));
    }
    best_response_at(model, i, x.as_slice())
}

pub(crate) fn best_response_at(model: &GameModel, i: usize, x: &[f64]) -> Result<f64> {
    let c = model.unit_cost(i);
    match model.shape() {
        Shape::Linear(risk) => {
            let own = model.influence(i, i).unwrap_or(0.0);
            let others: f64 = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| model.influence(i, j).unwrap_or(0.0) * x[j])
                .sum();
            let target = match risk {
                RiskFn::Exp => (own / c).ln(),
                RiskFn::Reciprocal => (own / c).sqrt(),
            };
            Ok(((target - others) / own).max(0.0))
        }
        Shape::SmoothMin { rho } => {
            let rest: f64 = (0..x.len()).filter(|&j| j != i).map(|j| (-rho * x[j]).exp()).sum();
            // log of the marginal risk reduction minus log c; decreasing in x_i
            let h = |v: f64| -rho * v + (1.0 / rho - 1.0) * ((-rho * v).exp() + rest).ln() - c.ln();
            if h(0.0) <= 0.0 {
                Ok(0.0)
            } else {
                root_decreasing(h, 0.0, 1.0)
            }
        }
    }
}

/// Largest violation of the individual first-order conditions: `|d g_i/d x_i|`
/// for investing users, `max(0, -d g_i/d x_i)` for users at zero.
pub fn nash_violation(model: &GameModel, x: &InvestmentProfile) -> Result<f64> {
    if x.len() != model.n() {
        return Err(Error::invalid(format!("profile has {} entries, expected {}", x.len(), model.n())));
    }
    Ok(violation_at(model, x.as_slice()))
}

pub(crate) fn violation_at(model: &GameModel, x: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| {
            let d = model.own_marginal_cost(i, x);
            if x[i] > 0.0 {
                d.abs()
            } else {
                (-d).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// The Nash equilibrium used as the price-of-anarchy baseline.
///
/// Symmetric or block-symmetric closed forms where the family has them;
/// otherwise Gauss-Seidel best-response iteration, with support
/// enumeration as the fallback for exponential models of up to 12 users.
pub fn nash_equilibrium(model: &GameModel) -> Result<InvestmentProfile> {
    let n = model.n();
    let closed = match model.family() {
        Family::SelfDependence { a, c, .. } => Some(vec![(a / c).ln() / (a + n as f64 - 1.0); n]),
        Family::Dominant { a, c, .. } => {
            let mut x = vec![0.0; n];
            x[0] = (a / c).ln() / a;
            Some(x)
        }
        Family::WeakestLink { rho, c, .. } => {
            let level = ((1.0 / rho - 1.0) * (n as f64).ln() - c.ln()).max(0.0);
            Some(vec![level; n])
        }
        Family::TwoClass { a1, a2, n1, n2, c } => two_class_block(model, *a1, *a2, *n1, *n2, *c),
        Family::Star { .. } | Family::General { .. } => None,
    };
    if let Some(x) = closed {
        let v = violation_at(model, &x);
        if v <= NASH_TOL {
            return Ok(InvestmentProfile::from_solver(x));
        }
        log::debug!("closed-form equilibrium of {model} rejected (violation {v:.3e})");
    }

    let iterated = gauss_seidel(model);
    match iterated {
        Ok(x) => Ok(InvestmentProfile::from_solver(x)),
        Err(err) if model.is_weighted_total_effort() && n <= ENUMERATION_LIMIT => {
            log::debug!("best-response iteration failed for {model}: {err}; enumerating supports");
            enumerate_supports(model).map(InvestmentProfile::from_solver)
        }
        Err(err) => Err(err),
    }
}

fn two_class_block(model: &GameModel, a1: f64, a2: f64, n1: usize, n2: usize, c: f64) -> Option<Vec<f64>> {
    let (m1, m2) = (n1 as f64, n2 as f64);
    let build = |x1: f64, x2: f64| {
        let mut x = vec![x1; n1 + n2];
        x[n1..].fill(x2);
        x
    };
    let mut candidates = vec![build((a1 / c).ln() / (a1 + m1 - 1.0), 0.0)];
    let system = DMatrix::from_row_slice(2, 2, &[a1 + m1 - 1.0, m2, m1, a2 + m2 - 1.0]);
    let rhs = DVector::from_row_slice(&[(a1 / c).ln(), (a2 / c).ln()]);
    if let Some(sol) = system.lu().solve(&rhs) {
        if sol[0] > 0.0 && sol[1] > 0.0 {
            candidates.push(build(sol[0], sol[1]));
        }
    }
    candidates.push(build(0.0, (a2 / c).ln() / (a2 + m2 - 1.0)));
    candidates.into_iter().find(|x| violation_at(model, x) <= NASH_TOL)
}

fn gauss_seidel(model: &GameModel) -> Result<Vec<f64>> {
    let n = model.n();
    let mut x = vec![0.0; n];
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let br = best_response_at(model, i, &x)?;
            change = change.max((br - x[i]).abs());
            x[i] = br;
        }
        if change <= 1e-14 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(*v))) {
            break;
        }
    }
    let v = violation_at(model, &x);
    if v <= NASH_TOL {
        Ok(x)
    } else {
        Err(Error::solver(format!("best-response iteration on {model}"), v))
    }
}

/// Try every support `S`: solve `(A x)_i = ln(A_ii / c_i)` on `S` with
/// `x = 0` off `S`, and keep the first non-negative solution satisfying all
/// individual conditions.
fn enumerate_supports(model: &GameModel) -> Result<Vec<f64>> {
    let n = model.n();
    let a = model.influence_matrix().ok_or_else(|| Error::Unsupported(model.describe()))?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).collect();
        let sub = DMatrix::from_fn(support.len(), support.len(), |p, q| a[(support[p], support[q])]);
        let rhs = DVector::from_iterator(
            support.len(),
            support.iter().map(|&i| (a[(i, i)] / model.unit_cost(i)).ln()),
        );
        let Some(sol) = sub.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !(*v > 0.0)) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (p, &i) in support.iter().enumerate() {
            x[i] = sol[p];
        }
        let v = violation_at(model, &x);
        if v <= NASH_TOL {
            return Ok(x);
        }
        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, x));
        }
    }
    Err(Error::solver(
        format!("support enumeration on {model}"),
        best.map_or(f64::INFINITY, |(v, _)| v),
    ))
}
