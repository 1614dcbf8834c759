//! Projected Newton for `min_{x >= 0} sum_r exp(-(b_r + w_r . x)) + c . x`.
//!
//! This covers the social optimum of any weighted-total-effort model and the
//! participants' group problem once the outlier's level is fixed (the
//! outlier's contribution moves into the offsets `b_r`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Projected-gradient infinity norm the iteration aims for.
const TARGET_PG: f64 = 1e-12;
/// Largest projected-gradient norm accepted when progress stalls.
pub(crate) const ACCEPT_PG: f64 = 1e-9;
const MAX_ITER: usize = 100_000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct ExpSum {
    offsets: Vec<f64>,
    weights: Vec<Vec<f64>>,
    costs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub projected_gradient: f64,
}

impl ExpSum {
    pub(crate) fn new(offsets: Vec<f64>, weights: Vec<Vec<f64>>, costs: Vec<f64>) -> Self {
        debug_assert_eq!(offsets.len(), weights.len());
        debug_assert!(weights.iter().all(|w| w.len() == costs.len()));
        ExpSum { offsets, weights, costs }
    }

    fn dim(&self) -> usize {
        self.costs.len()
    }

    fn terms(&self, x: &[f64]) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| (-(b + w.iter().zip(x).map(|(wk, xk)| wk * xk).sum::<f64>())).exp())
            .collect()
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        let risk: f64 = self.terms(x).iter().sum();
        risk + self.costs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub(crate) fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.costs.clone();
        for (e, w) in self.terms(x).iter().zip(&self.weights) {
            for (gk, wk) in g.iter_mut().zip(w) {
                *gk -= wk * e;
            }
        }
        g
    }

    fn hessian(&self, x: &[f64], free: &[usize]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(free.len(), free.len());
        for (e, w) in self.terms(x).iter().zip(&self.weights) {
            for (p, &k) in free.iter().enumerate() {
                if w[k] == 0.0 {
                    continue;
                }
                for (q, &l) in free.iter().enumerate() {
                    h[(p, q)] += e * w[k] * w[l];
                }
            }
        }
        h
    }
}

pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(xk, gk)| if *xk > 0.0 { gk.abs() } else { (-gk).max(0.0) })
        .fold(0.0, f64::max)
}

fn project(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Minimise from `x0` (projected onto the orthant first).
///
/// Each step takes a Newton direction on the coordinates that are not
/// held at zero by a positive gradient and falls back to steepest descent
/// when the reduced Hessian is not positive definite or the Newton step
/// yields no Armijo decrease.
pub(crate) fn minimize(problem: &ExpSum, x0: Vec<f64>) -> Result<Minimum> {
    let n = problem.dim();
    let mut x = x0;
    project(&mut x);
    if n == 0 {
        return Ok(Minimum { x, projected_gradient: 0.0 });
    }
    let mut fx = problem.value(&x);
    let mut g = problem.gradient(&x);
    let mut pg = projected_gradient_norm(&x, &g);

    for _ in 0..MAX_ITER {
        if pg <= TARGET_PG {
            break;
        }
        let step_to_projection: f64 = x
            .iter()
            .zip(&g)
            .map(|(xk, gk)| {
                let d = xk - (xk - gk).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let eps = step_to_projection.min(1e-6);
        let free: Vec<usize> = (0..n).filter(|&k| !(x[k] <= eps && g[k] > 0.0)).collect();

        let steepest: Vec<f64> = g.iter().map(|gk| -gk).collect();
        let mut directions = Vec::with_capacity(2);
        if !free.is_empty() {
            let h = problem.hessian(&x, &free);
            if let Some(chol) = h.cholesky() {
                let rhs = DVector::from_iterator(free.len(), free.iter().map(|&k| -g[k]));
                let sol = chol.solve(&rhs);
                if sol.iter().all(|v| v.is_finite()) {
                    let mut d = steepest.clone();
                    for (p, &k) in free.iter().enumerate() {
                        d[k] = sol[p];
                    }
                    if g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                        directions.push(d);
                    }
                }
            }
        }
        // A nearly singular reduced Hessian can give a Newton step the line
        // search cannot use; steepest descent is always tried after it.
        directions.push(steepest);

        let mut accepted = None;
        for d in &directions {
            accepted = line_search(problem, &x, fx, &g, pg, d);
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((trial, f_trial)) => {
                x = trial;
                fx = f_trial;
                g = problem.gradient(&x);
                pg = projected_gradient_norm(&x, &g);
            }
            None => break,
        }
    }

    if pg <= ACCEPT_PG {
        Ok(Minimum { x, projected_gradient: pg })
    } else {
        Err(Error::solver("projected Newton on exponential-sum objective", pg))
    }
}

/// Backtracking along the projection arc `P(x + t d)`.
fn line_search(problem: &ExpSum, x: &[f64], fx: f64, g: &[f64], pg: f64, d: &[f64]) -> Option<(Vec<f64>, f64)> {
    let mut t = 1.0;
    while t > 1e-30 {
        let mut trial: Vec<f64> = x.iter().zip(d).map(|(xk, dk)| xk + t * dk).collect();
        project(&mut trial);
        let f_trial = problem.value(&trial);
        let decrease: f64 = g.iter().zip(trial.iter().zip(x)).map(|(gk, (a, b))| gk * (a - b)).sum();
        if f_trial <= fx + ARMIJO * decrease {
            return Some((trial, f_trial));
        }
        // Rounding floor: take a non-increasing step that still shrinks
        // the projected gradient.
        if f_trial <= fx + 4.0 * f64::EPSILON * fx.abs() {
            let g_trial = problem.gradient(&trial);
            if projected_gradient_norm(&trial, &g_trial) < pg {
                return Some((trial, f_trial));
            }
        }
        t *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_problem() {
        // exp(-2x) + 0.5x  =>  2 exp(-2x) = 0.5  =>  x = ln(4)/2
        let p = ExpSum::new(vec![0.0, 0.0], vec![vec![2.0, 0.0], vec![0.0, 1.0]], vec![0.5, 2.0]);
        let m = minimize(&p, vec![0.0, 0.0]).unwrap();
        assert!((m.x[0] - 4f64.ln() / 2.0).abs() < 1e-12);
        assert_eq!(m.x[1], 0.0);
    }

    #[test]
    fn offsets_shift_the_optimum() {
        // exp(-(1 + x)) + 0.1x  =>  x = ln(10) - 1
        let p = ExpSum::new(vec![1.0], vec![vec![1.0]], vec![0.1]);
        let m = minimize(&p, vec![5.0]).unwrap();
        assert!((m.x[0] - (10f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn singular_hessian_falls_back() {
        // Only the sum matters: exp(-(x0 + x1)) + 0.5(x0 + x1).
        let p = ExpSum::new(vec![0.0], vec![vec![1.0, 1.0]], vec![0.5, 0.5]);
        let m = minimize(&p, vec![0.0, 0.0]).unwrap();
        assert!((m.x[0] + m.x[1] - 2f64.ln()).abs() < 1e-9);
    }
}
