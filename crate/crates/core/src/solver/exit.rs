//! Exit equilibria: one outlier best-responds on its own while the other
//! `N - 1` users minimise their joint cost.
//!
//! Each family proposes candidate profiles from its first-order systems,
//! one per support pattern. A candidate is kept only if it passes the
//! generic exit KKT test below, so the family code never has to restate
//! the existence inequalities.

use std::cell::RefCell;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Family, GameModel, InvestmentProfile, StarRisk};
use crate::numeric::{root_decreasing, scan_roots};

use super::convex::{minimize, projected_gradient_norm, ExpSum};
use super::nash::best_response_at;
use super::{ExitCase, ExitEquilibrium, STATIONARITY_TOL};

/// Candidates further apart than this are distinct equilibria.
const DEDUP_TOL: f64 = 1e-9;
const PERTURBATION: f64 = 1e-3;
const GENERAL_SCAN_CELLS: usize = 48;

type Candidate = (Vec<f64>, Option<ExitCase>);

/// Every exit equilibrium with `outlier` leaving, in a fixed order:
/// patterns where the outlier free-rides first, outlier-invests last.
pub fn exit_equilibria(model: &GameModel, outlier: usize) -> Result<Vec<ExitEquilibrium>> {
    if outlier >= model.n() {
        return Err(Error::invalid(format!("outlier {outlier} out of range for {} users", model.n())));
    }
    let candidates = match model.family() {
        Family::SelfDependence { a, n, c } => self_dependence(*a, *n, *c, outlier),
        Family::TwoClass { a1, a2, n1, n2, c } => two_class(*a1, *a2, *n1, *n2, *c, outlier)?,
        Family::Dominant { a, n, c } => dominant(*a, *n, *c, outlier),
        Family::Star { n, c, risk } => star(*n, *c, *risk, outlier),
        Family::WeakestLink { n, rho, c } => weakest_link(*n, *rho, *c, outlier)?,
        Family::General { .. } => general(model, outlier)?,
    };

    let mut found: Vec<ExitEquilibrium> = Vec::new();
    for (x, case) in candidates {
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let violation = exit_violation_at(model, outlier, &x);
        if violation > STATIONARITY_TOL {
            log::trace!("{model}: rejected {case:?} for outlier {outlier} (violation {violation:.3e})");
            continue;
        }
        let profile = InvestmentProfile::from_solver(x);
        if found.iter().any(|e| e.profile.max_abs_diff(&profile) <= DEDUP_TOL) {
            continue;
        }
        found.push(ExitEquilibrium { outlier, profile, case });
    }
    if found.is_empty() {
        return Err(Error::Internal(format!("{model} has no exit equilibrium for outlier {outlier}")));
    }
    Ok(found)
}

/// Exit equilibria for every possible outlier, indexed by outlier.
pub fn all_exit_equilibria(model: &GameModel) -> Result<Vec<Vec<ExitEquilibrium>>> {
    (0..model.n()).into_par_iter().map(|i| exit_equilibria(model, i)).collect()
}

/// Largest violation of the exit conditions at `x`: the outlier's own
/// projected marginal cost and the projected gradient of the participants'
/// joint cost.
pub fn exit_kkt_violation(model: &GameModel, outlier: usize, x: &InvestmentProfile) -> Result<f64> {
    if outlier >= model.n() || x.len() != model.n() {
        return Err(Error::invalid("outlier or profile does not match the model"));
    }
    Ok(exit_violation_at(model, outlier, x.as_slice()))
}

fn projected(x: f64, d: f64) -> f64 {
    if x > 0.0 {
        d.abs()
    } else {
        (-d).max(0.0)
    }
}

fn exit_violation_at(model: &GameModel, outlier: usize, x: &[f64]) -> f64 {
    let own = projected(x[outlier], model.own_marginal_cost(outlier, x));
    let group = model.cost_sum_gradient_at(x, Some(outlier));
    (0..x.len())
        .filter(|&k| k != outlier)
        .map(|k| projected(x[k], group[k]))
        .fold(own, f64::max)
}

/// Independent best-response test of an exit equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitCheck {
    /// Smallest change in the outlier's cost over the admissible
    /// perturbations of its level; negative means a profitable deviation.
    pub perturbation_gain: f64,
    /// Projected gradient of the participants' joint cost.
    pub group_residual: f64,
    pub passes: bool,
}

pub fn check_exit_equilibrium(model: &GameModel, ee: &ExitEquilibrium) -> Result<ExitCheck> {
    let o = ee.outlier;
    if o >= model.n() || ee.profile.len() != model.n() {
        return Err(Error::invalid("exit equilibrium does not match the model"));
    }
    let x = ee.profile.as_slice();
    let base = model.costs_at(x)[o];
    let mut gain = f64::INFINITY;
    for step in [PERTURBATION, -PERTURBATION] {
        let level = x[o] + step;
        if level < 0.0 {
            continue;
        }
        let mut y = x.to_vec();
        y[o] = level;
        gain = gain.min(model.costs_at(&y)[o] - base);
    }
    let mut participants = x.to_vec();
    let grad = model.cost_sum_gradient_at(x, Some(o));
    participants.remove(o);
    let mut g = grad;
    g.remove(o);
    let group_residual = projected_gradient_norm(&participants, &g);
    // Cost differences at this scale carry rounding of order 1e-15.
    let passes = gain >= -1e-13 && group_residual <= STATIONARITY_TOL;
    Ok(ExitCheck { perturbation_gain: gain, group_residual, passes })
}

fn profile(n: usize, outlier: usize, x: f64, y: f64) -> Vec<f64> {
    let mut v = vec![y; n];
    v[outlier] = x;
    v
}

fn self_dependence(a: f64, n: usize, c: f64, o: usize) -> Vec<Candidate> {
    let m = n as f64;
    let k = a + m - 2.0;
    let mut out = Vec::new();

    let free = (k / c).ln() / k;
    out.push((profile(n, o, 0.0, free), Some(if a >= 1.0 { ExitCase::Alpha } else { ExitCase::Gamma })));

    if a != 1.0 {
        let l1 = (a / c).ln();
        let spread = (1.0 + (m - 2.0) / a).ln();
        let denom = (a - 1.0) * (a + m - 1.0);
        let x = ((a - 1.0) * l1 - (m - 1.0) * spread) / denom;
        let y = ((a - 1.0) * l1 + a * spread) / denom;
        if x > 0.0 && y > 0.0 {
            out.push((profile(n, o, x, y), Some(if a > 1.0 { ExitCase::Beta } else { ExitCase::Zeta })));
        }
    }

    out.push((profile(n, o, (a / c).ln() / a, 0.0), Some(ExitCase::Omega)));
    out
}

fn two_class(a1: f64, a2: f64, n1: usize, n2: usize, c: f64, o: usize) -> Result<Vec<Candidate>> {
    let reliant = o >= n1;
    let (w, k, m) = if reliant { (a2, n1, n2 - 1) } else { (a1, n1 - 1, n2) };
    let (kf, mf) = (k as f64, m as f64);
    let s = a1 + kf - 1.0;
    let place = |x: f64, y: f64| {
        let mut v = vec![0.0; n1 + n2];
        v[..n1].fill(y);
        v[o] = x;
        v
    };
    let labels = if reliant {
        [ExitCase::ReliantFreeRides, ExitCase::ReliantCoInvests, ExitCase::ReliantInvests]
    } else {
        [ExitCase::SelfDependentFreeRides, ExitCase::SelfDependentInvests, ExitCase::SelfDependentAlone]
    };
    let mut out = Vec::new();

    // Participants alone: k self-dependent and m reliant users.
    let group = |y: f64| s * (-s * y).exp() + mf * (-kf * y).exp() - c;
    if group(0.0) > 0.0 {
        let y = root_decreasing(group, 0.0, ((s + mf) / c).ln() / kf.min(s))?;
        out.push((place(0.0, y), Some(labels[0])));
    }

    // Both invest: the outlier's condition pins y to x.
    let top = (w / c).ln() / w;
    let y_of = |x: f64| ((w / c).ln() - w * x) / kf;
    let phi = |x: f64| {
        let y = y_of(x);
        s * (-(x + s * y)).exp() + mf * (-(x + kf * y)).exp() - c
    };
    if top > 0.0 {
        for x in scan_roots(phi, 0.0, top, 64)? {
            let y = y_of(x);
            if x > 0.0 && y > 0.0 {
                out.push((place(x, y), Some(labels[1])));
            }
        }
        out.push((place(top, 0.0), Some(labels[2])));
    }
    Ok(out)
}

fn dominant(a: f64, n: usize, c: f64, o: usize) -> Vec<Candidate> {
    let p = n as f64 - 1.0;
    if o == 0 {
        vec![
            (profile(n, 0, 0.0, (p / c).ln() / p), Some(ExitCase::DominantAlpha)),
            (profile(n, 0, (a / c).ln() / a, 0.0), Some(ExitCase::DominantBeta)),
        ]
    } else {
        let mut x = vec![0.0; n];
        x[0] = (a * p / c).ln() / a;
        vec![(x, None)]
    }
}

fn star(n: usize, c: f64, risk: StarRisk, o: usize) -> Vec<Candidate> {
    let level = |weight: f64| match risk {
        StarRisk::Exponential => (weight / c).ln().max(0.0),
        StarRisk::Reciprocal => (weight / c).sqrt(),
    };
    if o == 0 {
        vec![
            (profile(n, 0, 0.0, level(1.0)), Some(ExitCase::LeavesInvest)),
            (profile(n, 0, level(1.0), 0.0), Some(ExitCase::RootInvests)),
        ]
    } else {
        let mut x = vec![0.0; n];
        x[0] = level(n as f64 - 1.0);
        vec![(x, None)]
    }
}

fn weakest_link(n: usize, rho: f64, c: f64, o: usize) -> Result<Vec<Candidate>> {
    let p = n as f64 - 1.0;
    let mut out = Vec::new();

    let free = |y: f64| p.ln() - rho * y + (1.0 / rho - 1.0) * (1.0 + p * (-rho * y).exp()).ln() - c.ln();
    if free(0.0) > 0.0 {
        out.push((profile(n, o, 0.0, root_decreasing(free, 0.0, 1.0)?), None));
    }

    let x = ((1.0 - rho) * 2f64.ln() - rho * c.ln()) / rho;
    if x > 0.0 {
        out.push((profile(n, o, x, x + p.ln() / rho), None));
    }

    let alone = |x: f64| -rho * x + (1.0 / rho - 1.0) * ((-rho * x).exp() + p).ln() - c.ln();
    if alone(0.0) > 0.0 {
        out.push((profile(n, o, root_decreasing(alone, 0.0, 1.0)?, 0.0), None));
    }

    out.push((vec![0.0; n], None));
    Ok(out)
}

/// Participants' optimum given the outlier's level, as a fixed-point scan
/// over that level.
fn general(model: &GameModel, o: usize) -> Result<Vec<Candidate>> {
    let n = model.n();
    let a = model
        .influence_matrix()
        .ok_or_else(|| Error::Unsupported(model.describe()))?;
    let others: Vec<usize> = (0..n).filter(|&k| k != o).collect();
    let weights: Vec<Vec<f64>> = others.iter().map(|&j| others.iter().map(|&k| a[(j, k)]).collect()).collect();
    let costs: Vec<f64> = others.iter().map(|&k| model.unit_cost(k)).collect();
    let warm = RefCell::new(vec![0.0; others.len()]);

    let respond = |xo: f64| -> Result<Vec<f64>> {
        let offsets = others.iter().map(|&j| a[(j, o)] * xo).collect();
        let problem = ExpSum::new(offsets, weights.clone(), costs.clone());
        let min = minimize(&problem, warm.borrow().clone())?;
        *warm.borrow_mut() = min.x.clone();
        let mut x = vec![0.0; n];
        x[o] = xo;
        for (p, &k) in others.iter().enumerate() {
            x[k] = min.x[p];
        }
        Ok(x)
    };
    let failure = RefCell::new(None);
    let phi = |xo: f64| match respond(xo).and_then(|x| best_response_at(model, o, &x)) {
        Ok(br) => br - xo,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };

    let top = ((a[(o, o)] / model.unit_cost(o)).ln() / a[(o, o)]).max(0.0);
    let roots = if top > 0.0 { scan_roots(&phi, 0.0, top, GENERAL_SCAN_CELLS)? } else { vec![0.0] };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    // scan_roots reports roots in increasing order of the outlier's level
    let mut out = Vec::new();
    for xo in roots {
        out.push((respond(xo)?, None));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn all_pass(model: &GameModel) -> Vec<Vec<ExitEquilibrium>> {
        let all = all_exit_equilibria(model).unwrap();
        for set in &all {
            for ee in set {
                let check = check_exit_equilibrium(model, ee).unwrap();
                assert!(check.passes, "{model} {ee:?}: {check:?}");
            }
        }
        all
    }

    #[test]
    fn self_dependence_beta() {
        let all = all_pass(&GameModel::self_dependence(10.0, 6, 1.0).unwrap());
        for (i, set) in all.iter().enumerate() {
            assert_eq!(set.len(), 1);
            assert_eq!(set[0].case, Some(ExitCase::Beta));
            assert!((set[0].profile[i] - 0.141044).abs() < 1e-6);
            assert!((set[0].profile[(i + 1) % 6] - 0.178430).abs() < 1e-6);
        }
    }

    #[test]
    fn self_dependence_low_a_has_three() {
        let set = exit_equilibria(&GameModel::self_dependence(0.5, 3, 0.01).unwrap(), 1).unwrap();
        let cases: Vec<_> = set.iter().map(|e| e.case.unwrap()).collect();
        assert_eq!(cases, vec![ExitCase::Gamma, ExitCase::Zeta, ExitCase::Omega]);
        all_pass(&GameModel::self_dependence(0.5, 3, 0.01).unwrap());
    }

    #[test]
    fn weakest_link_free_ride() {
        let set = exit_equilibria(&GameModel::weakest_link(4, 1.0, 1.0).unwrap(), 0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].profile[0], 0.0);
        assert!((set[0].profile[2] - 3f64.ln()).abs() < 1e-10);
        all_pass(&GameModel::weakest_link(5, 0.5, 0.3).unwrap());
        all_pass(&GameModel::weakest_link(5, 2.0, 0.3).unwrap());
    }

    #[test]
    fn dominant_branches() {
        let set = exit_equilibria(&GameModel::dominant(5.0, 10, 0.45).unwrap(), 0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set[0].case, Some(ExitCase::DominantAlpha));
        assert!((set[0].profile[3] - 20f64.ln() / 9.0).abs() < 1e-12);
        let set = exit_equilibria(&GameModel::dominant(12.0, 10, 0.45).unwrap(), 0).unwrap();
        assert_eq!(set[0].case, Some(ExitCase::DominantBeta));
        all_pass(&GameModel::dominant(5.0, 10, 0.45).unwrap());
    }

    #[test]
    fn star_root_exit_has_two() {
        let m = GameModel::star(5, 0.4, StarRisk::Exponential).unwrap();
        assert_eq!(exit_equilibria(&m, 0).unwrap().len(), 2);
        all_pass(&m);
        all_pass(&GameModel::star(5, 0.4, StarRisk::Reciprocal).unwrap());
    }

    #[test]
    fn two_class_sets() {
        let m = GameModel::two_class(4.0, 0.1, 8, 2, 0.05).unwrap();
        let all = all_pass(&m);
        assert!(all[9].iter().any(|e| e.case == Some(ExitCase::ReliantInvests)));
        assert!(all[9].iter().any(|e| e.case == Some(ExitCase::ReliantFreeRides)));
        let m = GameModel::two_class(4.0, 0.9, 8, 2, 0.05).unwrap();
        let all = all_pass(&m);
        assert!(all[9].iter().all(|e| e.case != Some(ExitCase::ReliantInvests)));
    }

    #[test]
    fn general_matches_family_closed_form() {
        let sd = GameModel::self_dependence(3.0, 4, 0.5).unwrap();
        let w = sd.influence_matrix().unwrap();
        let general = GameModel::general(w, vec![0.5; 4]).unwrap();
        let closed = exit_equilibria(&sd, 2).unwrap();
        let numeric = exit_equilibria(&general, 2).unwrap();
        assert_eq!(closed.len(), numeric.len());
        assert!(closed[0].profile.max_abs_diff(&numeric[0].profile) < 1e-7);
    }

    #[test]
    fn general_asymmetric_passes() {
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.3, 1.5, 0.2, 1.0, 1.0, 0.8]);
        all_pass(&GameModel::general(w, vec![0.2, 0.3, 0.5]).unwrap());
    }
}
