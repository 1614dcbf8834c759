//! Exhaustive grid search for the social optimum of small models. Only
//! meant as an independent check on the solvers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GameModel, InvestmentProfile, Shape};

const MAX_USERS: usize = 4;
const MIN_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOptimum {
    pub profile: InvestmentProfile,
    pub value: f64,
    /// Grid spacing `bound / steps`.
    pub cell: f64,
    /// Set when the argmin touches the upper edge of the grid, i.e. the box
    /// may be too small to contain the optimum.
    pub warning: Option<String>,
}

/// Evaluates `sum_i g_i` on every point of `{0, h, ..., bound}^N` with
/// `h = bound / steps` and returns the smallest (lowest index on ties).
pub fn brute_force_social_optimum(model: &GameModel, bound: f64, steps: usize) -> Result<GridOptimum> {
    let n = model.n();
    if n > MAX_USERS {
        return Err(Error::Unsupported(format!("grid oracle handles at most {MAX_USERS} users, got {n}")));
    }
    if steps < MIN_STEPS {
        return Err(Error::invalid(format!("grid oracle needs at least {MIN_STEPS} steps, got {steps}")));
    }
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::invalid(format!("grid bound must be finite and > 0, got {bound}")));
    }
    let cell = bound / steps as f64;
    let side = steps + 1;
    let eval = Evaluator::new(model);
    let inner = side.pow(n as u32 - 1);

    let (value, index) = (0..side)
        .into_par_iter()
        .map(|first| {
            let mut x = [0.0; MAX_USERS];
            let mut best = (f64::INFINITY, usize::MAX);
            for rest in 0..inner {
                let index = first * inner + rest;
                decode(index, side, n, cell, &mut x);
                let v = eval.social_cost(&x[..n]);
                if v < best.0 {
                    best = (v, index);
                }
            }
            best
        })
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });

    if index == usize::MAX {
        return Err(Error::Internal(format!("grid oracle found no finite value for {model}")));
    }
    let mut x = [0.0; MAX_USERS];
    decode(index, side, n, cell, &mut x);
    let on_edge: Vec<usize> = (0..n).filter(|&k| (x[k] - bound).abs() <= 0.5 * cell).collect();
    let warning = if on_edge.is_empty() {
        None
    } else {
        let msg = format!("grid argmin of {model} lies on the upper bound for users {on_edge:?}; enlarge the bound");
        log::warn!("{msg}");
        Some(msg)
    };
    Ok(GridOptimum { profile: InvestmentProfile::from_solver(x[..n].to_vec()), value, cell, warning })
}

fn decode(mut index: usize, side: usize, n: usize, cell: f64, x: &mut [f64; MAX_USERS]) {
    for k in (0..n).rev() {
        x[k] = (index % side) as f64 * cell;
        index /= side;
    }
}

/// Allocation-free social cost for at most four users.
struct Evaluator<'a> {
    model: &'a GameModel,
    weights: [[f64; MAX_USERS]; MAX_USERS],
    costs: [f64; MAX_USERS],
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a GameModel) -> Self {
        let n = model.n();
        let mut weights = [[0.0; MAX_USERS]; MAX_USERS];
        let mut costs = [0.0; MAX_USERS];
        for i in 0..n {
            costs[i] = model.unit_cost(i);
            for j in 0..n {
                weights[i][j] = model.influence(i, j).unwrap_or(0.0);
            }
        }
        Evaluator { model, weights, costs }
    }

    fn social_cost(&self, x: &[f64]) -> f64 {
        let investment: f64 = x.iter().zip(&self.costs).map(|(v, c)| v * c).sum();
        match self.model.shape() {
            Shape::Linear(risk) => {
                let mut total = investment;
                for row in &self.weights[..x.len()] {
                    let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                    total += risk.value(z);
                }
                total
            }
            Shape::SmoothMin { rho } => {
                let s: f64 = x.iter().map(|v| (-rho * v).exp()).sum();
                investment + x.len() as f64 * s.powf(1.0 / rho)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StarRisk;

    #[test]
    fn self_dependence_three_users() {
        let m = GameModel::self_dependence(10.0, 3, 1.0).unwrap();
        let g = brute_force_social_optimum(&m, 0.5, 100).unwrap();
        let exact = 12f64.ln() / 12.0;
        assert!(g.profile.as_slice().iter().all(|v| (v - exact).abs() <= g.cell));
        assert!(g.warning.is_none());
    }

    #[test]
    fn star_root_only() {
        let m = GameModel::star(3, 1.0, StarRisk::Exponential).unwrap();
        let g = brute_force_social_optimum(&m, 2.0, 100).unwrap();
        assert!((g.profile[0] - 3f64.ln()).abs() <= g.cell);
        assert_eq!(&g.profile.as_slice()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn small_bound_warns() {
        let m = GameModel::self_dependence(10.0, 3, 1.0).unwrap();
        let g = brute_force_social_optimum(&m, 0.1, 50).unwrap();
        assert!(g.warning.is_some());
    }

    #[test]
    fn evaluator_matches_model() {
        let m = GameModel::weakest_link(3, 0.7, 0.4).unwrap();
        let x = [0.3, 1.1, 0.0];
        let e = Evaluator::new(&m);
        assert!((e.social_cost(&x) - m.social_cost_at(&x)).abs() < 1e-14);
    }

    #[test]
    fn rejects_large_models() {
        let m = GameModel::self_dependence(10.0, 5, 1.0).unwrap();
        assert!(brute_force_social_optimum(&m, 1.0, 50).is_err());
        let m = GameModel::self_dependence(10.0, 3, 1.0).unwrap();
        assert!(brute_force_social_optimum(&m, 1.0, 10).is_err());
    }
}
