//! Game families, investment and tax profiles, and the pure cost, risk and
//! gradient evaluations everything downstream is built on.
//!
//! Users are indexed from 0. In the star topology user 0 is the root; in
//! the dominant-user family user 0 is the dominant user; in the two-class
//! family users `0..n1` are self-dependent and `n1..n1 + n2` are reliant.

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{format_sig, log_sum_exp};

/// Risk as a function of the aggregate protection in the star topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarRisk {
    /// `exp(-z)`
    Exponential,
    /// `1 / z`
    Reciprocal,
}

impl fmt::Display for StarRisk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StarRisk::Exponential => write!(f, "exp"),
            StarRisk::Reciprocal => write!(f, "reciprocal"),
        }
    }
}

/// The parametrised model families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Every user weighs its own effort by `a` and everyone else's by 1.
    SelfDependence { a: f64, n: usize, c: f64 },
    /// `n1` self-dependent users (own weight `a1 > 1`) and `n2` reliant
    /// users (own weight `a2 < 1`).
    TwoClass { a1: f64, a2: f64, n1: usize, n2: usize, c: f64 },
    /// Every user weighs user 0's effort by `a` and all other efforts by 1.
    Dominant { a: f64, n: usize, c: f64 },
    /// Root 0 protects everyone; leaf `j` protects only itself and the root.
    Star { n: usize, c: f64, risk: StarRisk },
    /// Smoothed weakest-link risk `(sum_j exp(-rho x_j))^(1/rho)`.
    WeakestLink { n: usize, rho: f64, c: f64 },
    /// Weighted total effort `exp(-(A x)_i)` with per-user unit costs.
    General { weights: DMatrix<f64>, costs: Vec<f64> },
}

/// A validated game model.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum RiskFn {
    Exp,
    Reciprocal,
}

impl RiskFn {
    pub(crate) fn value(self, z: f64) -> f64 {
        match self {
            RiskFn::Exp => (-z).exp(),
            RiskFn::Reciprocal => 1.0 / z,
        }
    }

    pub(crate) fn slope(self, z: f64) -> f64 {
        match self {
            RiskFn::Exp => -(-z).exp(),
            RiskFn::Reciprocal => -1.0 / (z * z),
        }
    }
}

/// How a model's risks depend on the investment profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Shape {
    /// `f_i = r((A x)_i)` for an influence matrix `A`.
    Linear(RiskFn),
    /// Smoothed weakest link, identical risk for every user.
    SmoothMin { rho: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be >= {min}, got {v}")))
    }
}

impl GameModel {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::SelfDependence { a, n, c } => {
                at_least("n", *n, 2)?;
                positive("a", *a)?;
                positive("c", *c)?;
                if c >= a {
                    return Err(Error::invalid(format!("self-dependence requires c < a (c={c}, a={a})")));
                }
            }
            Family::TwoClass { a1, a2, n1, n2, c } => {
                at_least("n1", *n1, 2)?;
                at_least("n2", *n2, 1)?;
                positive("a1", *a1)?;
                positive("a2", *a2)?;
                positive("c", *c)?;
                if !(c < a2 && *a2 < 1.0 && 1.0 < *a1) {
                    return Err(Error::invalid(format!(
                        "two-class requires c < a2 < 1 < a1 (c={c}, a2={a2}, a1={a1})"
                    )));
                }
            }
            Family::Dominant { a, n, c } => {
                at_least("n", *n, 2)?;
                positive("a", *a)?;
                positive("c", *c)?;
                if !(*c < 1.0 && 1.0 < *a) {
                    return Err(Error::invalid(format!("dominant requires c < 1 < a (c={c}, a={a})")));
                }
            }
            Family::Star { n, c, .. } => {
                at_least("n", *n, 2)?;
                positive("c", *c)?;
            }
            Family::WeakestLink { n, rho, c } => {
                at_least("n", *n, 2)?;
                positive("rho", *rho)?;
                positive("c", *c)?;
            }
            Family::General { weights, costs } => {
                let n = weights.nrows();
                at_least("n", n, 2)?;
                if weights.ncols() != n {
                    return Err(Error::invalid(format!("influence matrix must be square, got {}x{}", n, weights.ncols())));
                }
                if costs.len() != n {
                    return Err(Error::invalid(format!("expected {n} unit costs, got {}", costs.len())));
                }
                for (k, w) in weights.iter().enumerate() {
                    if !w.is_finite() || *w < 0.0 {
                        return Err(Error::invalid(format!("influence weights must be finite and >= 0 (entry {k} is {w})")));
                    }
                }
                for i in 0..n {
                    positive(&format!("A[{i},{i}]"), weights[(i, i)])?;
                    positive(&format!("c[{i}]"), costs[i])?;
                }
            }
        }
        Ok(GameModel { family })
    }

    pub fn self_dependence(a: f64, n: usize, c: f64) -> Result<Self> {
        Self::new(Family::SelfDependence { a, n, c })
    }

    pub fn two_class(a1: f64, a2: f64, n1: usize, n2: usize, c: f64) -> Result<Self> {
        Self::new(Family::TwoClass { a1, a2, n1, n2, c })
    }

    pub fn dominant(a: f64, n: usize, c: f64) -> Result<Self> {
        Self::new(Family::Dominant { a, n, c })
    }

    pub fn star(n: usize, c: f64, risk: StarRisk) -> Result<Self> {
        Self::new(Family::Star { n, c, risk })
    }

    pub fn weakest_link(n: usize, rho: f64, c: f64) -> Result<Self> {
        Self::new(Family::WeakestLink { n, rho, c })
    }

    pub fn general(weights: DMatrix<f64>, costs: Vec<f64>) -> Result<Self> {
        Self::new(Family::General { weights, costs })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn n(&self) -> usize {
        match &self.family {
            Family::SelfDependence { n, .. }
            | Family::Dominant { n, .. }
            | Family::Star { n, .. }
            | Family::WeakestLink { n, .. } => *n,
            Family::TwoClass { n1, n2, .. } => n1 + n2,
            Family::General { weights, .. } => weights.nrows(),
        }
    }

    /// Linear investment cost per unit of effort for user `i`.
    pub fn unit_cost(&self, i: usize) -> f64 {
        match &self.family {
            Family::SelfDependence { c, .. }
            | Family::TwoClass { c, .. }
            | Family::Dominant { c, .. }
            | Family::Star { c, .. }
            | Family::WeakestLink { c, .. } => *c,
            Family::General { costs, .. } => costs[i],
        }
    }

    pub(crate) fn shape(&self) -> Shape {
        match &self.family {
            Family::WeakestLink { rho, .. } => Shape::SmoothMin { rho: *rho },
            Family::Star { risk: StarRisk::Reciprocal, .. } => Shape::Linear(RiskFn::Reciprocal),
            _ => Shape::Linear(RiskFn::Exp),
        }
    }

    /// True when every risk is `exp(-(A x)_i)`.
    pub fn is_weighted_total_effort(&self) -> bool {
        self.shape() == Shape::Linear(RiskFn::Exp)
    }

    /// Weight of user `j`'s effort in user `i`'s aggregate protection, for
    /// the families whose risk depends on a linear aggregate.
    pub fn influence(&self, i: usize, j: usize) -> Option<f64> {
        let w = match &self.family {
            Family::SelfDependence { a, .. } => {
                if i == j {
                    *a
                } else {
                    1.0
                }
            }
            Family::TwoClass { a1, a2, n1, .. } => {
                if i != j {
                    1.0
                } else if i < *n1 {
                    *a1
                } else {
                    *a2
                }
            }
            Family::Dominant { a, .. } => {
                if j == 0 {
                    *a
                } else {
                    1.0
                }
            }
            Family::Star { .. } => {
                if i == 0 || j == 0 || i == j {
                    1.0
                } else {
                    0.0
                }
            }
            Family::General { weights, .. } => weights[(i, j)],
            Family::WeakestLink { .. } => return None,
        };
        Some(w)
    }

    pub fn influence_matrix(&self) -> Option<DMatrix<f64>> {
        if let Family::General { weights, .. } = &self.family {
            return Some(weights.clone());
        }
        let n = self.n();
        self.influence(0, 0)?;
        Some(DMatrix::from_fn(n, n, |i, j| self.influence(i, j).unwrap_or(0.0)))
    }

    /// Aggregate protection `(A x)_i` of every user (linear families only).
    pub(crate) fn aggregates(&self, x: &[f64]) -> Vec<f64> {
        let total: f64 = x.iter().sum();
        match &self.family {
            Family::SelfDependence { a, .. } => x.iter().map(|xi| total + (a - 1.0) * xi).collect(),
            Family::TwoClass { a1, a2, n1, .. } => x
                .iter()
                .enumerate()
                .map(|(i, xi)| total + (if i < *n1 { a1 } else { a2 } - 1.0) * xi)
                .collect(),
            Family::Dominant { a, n, .. } => vec![total + (a - 1.0) * x[0]; *n],
            Family::Star { .. } => {
                let mut z: Vec<f64> = x.iter().map(|xj| x[0] + xj).collect();
                z[0] = total;
                z
            }
            Family::General { weights, .. } => (0..x.len())
                .map(|i| weights.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
                .collect(),
            Family::WeakestLink { .. } => unreachable!("weakest link has no linear aggregate"),
        }
    }

    fn smooth_min_lse(rho: f64, x: &[f64]) -> f64 {
        let scaled: Vec<f64> = x.iter().map(|v| -rho * v).collect();
        log_sum_exp(&scaled)
    }

    /// Risk `f_i(x)` of every user.
    pub(crate) fn risks_at(&self, x: &[f64]) -> Vec<f64> {
        match self.shape() {
            Shape::Linear(r) => self.aggregates(x).into_iter().map(|z| r.value(z)).collect(),
            Shape::SmoothMin { rho } => {
                let risk = (Self::smooth_min_lse(rho, x) / rho).exp();
                vec![risk; x.len()]
            }
        }
    }

    /// Security cost `g_i(x)` of every user.
    pub(crate) fn costs_at(&self, x: &[f64]) -> Vec<f64> {
        self.risks_at(x)
            .into_iter()
            .enumerate()
            .map(|(i, f)| f + self.unit_cost(i) * x[i])
            .collect()
    }

    pub(crate) fn social_cost_at(&self, x: &[f64]) -> f64 {
        self.costs_at(x).iter().sum()
    }

    /// Gradient of `sum_{j != exclude} g_j` with respect to every coordinate.
    pub(crate) fn cost_sum_gradient_at(&self, x: &[f64], exclude: Option<usize>) -> Vec<f64> {
        let n = x.len();
        let mut grad: Vec<f64> = (0..n)
            .map(|k| if Some(k) == exclude { 0.0 } else { self.unit_cost(k) })
            .collect();
        match self.shape() {
            Shape::Linear(r) => {
                let z = self.aggregates(x);
                for (j, zj) in z.iter().enumerate() {
                    if Some(j) == exclude {
                        continue;
                    }
                    let slope = r.slope(*zj);
                    for (k, g) in grad.iter_mut().enumerate() {
                        let w = self.influence(j, k).unwrap_or(0.0);
                        if w != 0.0 {
                            *g += w * slope;
                        }
                    }
                }
            }
            Shape::SmoothMin { rho } => {
                let lse = Self::smooth_min_lse(rho, x);
                let users = (n - usize::from(exclude.is_some())) as f64;
                for (k, g) in grad.iter_mut().enumerate() {
                    *g -= users * (-rho * x[k] + (1.0 / rho - 1.0) * lse).exp();
                }
            }
        }
        grad
    }

    /// `d g_i / d x_i`: user `i`'s own marginal cost.
    pub(crate) fn own_marginal_cost(&self, i: usize, x: &[f64]) -> f64 {
        let c = self.unit_cost(i);
        match self.shape() {
            Shape::Linear(r) => {
                let z = self.aggregates(x);
                self.influence(i, i).unwrap_or(0.0) * r.slope(z[i]) + c
            }
            Shape::SmoothMin { rho } => {
                let lse = Self::smooth_min_lse(rho, x);
                c - (-rho * x[i] + (1.0 / rho - 1.0) * lse).exp()
            }
        }
    }

    /// `-sum_j x_j df_i/dx_j - h_i'(x_i) x_i`, from analytic derivatives.
    pub(crate) fn externality_tax_at(&self, i: usize, x: &[f64]) -> f64 {
        let c = self.unit_cost(i);
        match self.shape() {
            Shape::Linear(r) => {
                let z = self.aggregates(x);
                -r.slope(z[i]) * z[i] - c * x[i]
            }
            Shape::SmoothMin { rho } => {
                let lse = Self::smooth_min_lse(rho, x);
                let received: f64 = x
                    .iter()
                    .map(|xj| xj * (-rho * xj + (1.0 / rho - 1.0) * lse).exp())
                    .sum();
                received - c * x[i]
            }
        }
    }

    fn check_profile(&self, x: &InvestmentProfile) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::invalid(format!(
                "profile has {} entries but the model has {} users",
                x.len(),
                self.n()
            )));
        }
        Ok(())
    }

    fn check_user(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::invalid(format!("user index {i} out of range for {} users", self.n())));
        }
        Ok(())
    }

    /// `g_i(x)` split into risk and investment cost.
    pub fn eval_cost(&self, i: usize, x: &InvestmentProfile) -> Result<CostBreakdown> {
        self.check_user(i)?;
        self.check_profile(x)?;
        let risk = self.risks_at(x.as_slice())[i];
        let investment = self.unit_cost(i) * x[i];
        Ok(CostBreakdown { risk, investment, tax: 0.0, total: risk + investment })
    }

    /// `g_i(x) + t_i`.
    pub fn eval_total_cost(&self, i: usize, x: &InvestmentProfile, taxes: &TaxProfile) -> Result<f64> {
        if taxes.len() != self.n() {
            return Err(Error::invalid(format!("tax profile has {} entries, expected {}", taxes.len(), self.n())));
        }
        let mut cost = self.eval_cost(i, x)?;
        cost.tax = taxes[i];
        cost.total += cost.tax;
        Ok(cost.total)
    }

    /// `sum_i g_i(x)`.
    pub fn social_cost(&self, x: &InvestmentProfile) -> Result<f64> {
        self.check_profile(x)?;
        Ok(self.social_cost_at(x.as_slice()))
    }

    /// All users' `g_i(x)`.
    pub fn costs(&self, x: &InvestmentProfile) -> Result<Vec<f64>> {
        self.check_profile(x)?;
        Ok(self.costs_at(x.as_slice()))
    }

    /// `d/dx_k sum_i g_i(x)` for every `k`.
    pub fn social_cost_gradient(&self, x: &InvestmentProfile) -> Result<Vec<f64>> {
        self.check_profile(x)?;
        Ok(self.cost_sum_gradient_at(x.as_slice(), None))
    }

    /// Gradient of the participants' cost `sum_{j != outlier} g_j(x)`.
    pub fn group_cost_gradient(&self, outlier: usize, x: &InvestmentProfile) -> Result<Vec<f64>> {
        self.check_user(outlier)?;
        self.check_profile(x)?;
        Ok(self.cost_sum_gradient_at(x.as_slice(), Some(outlier)))
    }

    pub fn describe(&self) -> String {
        let g = |v: f64| format_sig(v, 6);
        match &self.family {
            Family::SelfDependence { a, n, c } => format!("self-dependence(a={}, n={n}, c={})", g(*a), g(*c)),
            Family::TwoClass { a1, a2, n1, n2, c } => {
                format!("two-class(a1={}, a2={}, n1={n1}, n2={n2}, c={})", g(*a1), g(*a2), g(*c))
            }
            Family::Dominant { a, n, c } => format!("dominant(a={}, n={n}, c={})", g(*a), g(*c)),
            Family::Star { n, c, risk } => format!("star(n={n}, c={}, risk={risk})", g(*c)),
            Family::WeakestLink { n, rho, c } => format!("weakest-link(n={n}, rho={}, c={})", g(*rho), g(*c)),
            Family::General { weights, .. } => format!("general({0}x{0})", weights.nrows()),
        }
    }
}

impl fmt::Display for GameModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Per-user security levels, all finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvestmentProfile(Vec<f64>);

impl InvestmentProfile {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("investment x[{i}] = {v} must be finite and >= 0")));
        }
        Ok(InvestmentProfile(values))
    }

    pub fn uniform(n: usize, level: f64) -> Result<Self> {
        Self::new(vec![level; n])
    }

    pub fn zeros(n: usize) -> Self {
        InvestmentProfile(vec![0.0; n])
    }

    /// Solver output: rounding-level negatives are snapped to zero.
    pub(crate) fn from_solver(mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            debug_assert!(v.is_finite(), "non-finite solver output");
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        InvestmentProfile(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Which users invest a strictly positive amount.
    pub fn support(&self) -> Vec<bool> {
        self.0.iter().map(|v| *v > 0.0).collect()
    }

    pub fn max_abs_diff(&self, other: &InvestmentProfile) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for InvestmentProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Pivotal,
    Externality,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Pivotal => write!(f, "pivotal"),
            Mechanism::Externality => write!(f, "externality"),
        }
    }
}

/// Per-user taxes; positive is a payment, negative a reward.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxProfile {
    values: Vec<f64>,
    mechanism: Mechanism,
}

impl TaxProfile {
    pub fn new(values: Vec<f64>, mechanism: Mechanism) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("tax t[{i}] = {v} is not finite")));
        }
        Ok(TaxProfile { values, mechanism })
    }

    pub fn zeros(n: usize, mechanism: Mechanism) -> Self {
        TaxProfile { values: vec![0.0; n], mechanism }
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum_i t_i`; negative means a deficit.
    pub fn budget(&self) -> f64 {
        self.values.iter().sum()
    }
}

impl Index<usize> for TaxProfile {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// `g_i(x)` (plus a tax, when one applies) split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub risk: f64,
    pub investment: f64,
    pub tax: f64,
    pub total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sd(a: f64, n: usize, c: f64) -> GameModel {
        GameModel::self_dependence(a, n, c).unwrap()
    }

    #[test]
    fn rejects_standing_assumption_violations() {
        assert!(GameModel::self_dependence(1.0, 6, 1.0).is_err());
        assert!(GameModel::self_dependence(2.0, 1, 1.0).is_err());
        assert!(GameModel::two_class(4.0, 1.2, 8, 2, 0.05).is_err());
        assert!(GameModel::two_class(4.0, 0.04, 8, 2, 0.05).is_err());
        assert!(GameModel::dominant(0.9, 10, 0.45).is_err());
        assert!(GameModel::dominant(5.0, 10, 1.2).is_err());
        assert!(GameModel::weakest_link(4, 0.0, 1.0).is_err());
        assert!(GameModel::star(4, f64::NAN, StarRisk::Exponential).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.0]);
        assert!(GameModel::general(w, vec![0.5, 0.5]).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.5, 1.0]);
        assert!(GameModel::general(w, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn self_dependence_cost_at_optimum() {
        let m = sd(10.0, 6, 1.0);
        let x = InvestmentProfile::uniform(6, 0.180537).unwrap();
        let cost = m.eval_cost(0, &x).unwrap();
        assert!((cost.total - 0.247203).abs() < 1e-6);
        assert_eq!(cost.total, cost.risk + cost.investment);
    }

    #[test]
    fn zero_profile_has_unit_risk() {
        let models = [
            sd(10.0, 6, 1.0),
            GameModel::two_class(4.0, 0.1, 8, 2, 0.05).unwrap(),
            GameModel::dominant(5.0, 10, 0.45).unwrap(),
            GameModel::star(5, 0.5, StarRisk::Exponential).unwrap(),
            GameModel::weakest_link(4, 1.0, 1.0).unwrap(),
        ];
        for m in &models {
            let x = InvestmentProfile::zeros(m.n());
            for i in 0..m.n() {
                let cost = m.eval_cost(i, &x).unwrap();
                assert_eq!(cost.investment, 0.0);
                assert!((cost.risk - 1.0).abs() < 1e-15 || matches!(m.family(), Family::WeakestLink { .. }));
            }
        }
        // Weakest link at zero: (sum_j 1)^(1/rho) = n for rho = 1.
        let wl = GameModel::weakest_link(4, 1.0, 1.0).unwrap();
        assert!((wl.eval_cost(0, &InvestmentProfile::zeros(4)).unwrap().risk - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weakest_link_cost_at_optimum() {
        let m = GameModel::weakest_link(4, 1.0, 1.0).unwrap();
        let x = InvestmentProfile::uniform(4, 4f64.ln()).unwrap();
        let total = m.eval_cost(2, &x).unwrap().total;
        assert!((total - 2.386294).abs() < 1e-6);
    }

    #[test]
    fn total_cost_adds_tax() {
        let m = sd(10.0, 6, 1.0);
        let x = InvestmentProfile::uniform(6, 0.2).unwrap();
        let g = m.eval_cost(1, &x).unwrap().total;
        let zero = TaxProfile::zeros(6, Mechanism::Pivotal);
        assert_eq!(m.eval_total_cost(1, &x, &zero).unwrap(), g);
        let mut t = vec![0.0; 6];
        t[1] = -g;
        let t = TaxProfile::new(t, Mechanism::Pivotal).unwrap();
        assert!(m.eval_total_cost(1, &x, &t).unwrap().abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_invalid_input() {
        let m = sd(10.0, 6, 1.0);
        let x = InvestmentProfile::zeros(5);
        assert!(matches!(m.eval_cost(0, &x), Err(Error::InvalidInput(_))));
        assert!(matches!(m.social_cost_gradient(&x), Err(Error::InvalidInput(_))));
        assert!(matches!(m.eval_cost(6, &InvestmentProfile::zeros(6)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn profile_rejects_negative_and_nan() {
        assert!(InvestmentProfile::new(vec![0.0, -1e-3]).is_err());
        assert!(InvestmentProfile::new(vec![f64::NAN]).is_err());
        assert!(TaxProfile::new(vec![f64::INFINITY], Mechanism::Externality).is_err());
    }

    #[test]
    fn gradient_vanishes_at_self_dependence_optimum() {
        let m = sd(10.0, 6, 1.0);
        let x_star = (15f64).ln() / 15.0;
        let g = m.social_cost_gradient(&InvestmentProfile::uniform(6, x_star).unwrap()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9), "{g:?}");
    }

    #[test]
    fn star_gradient_pins_leaves() {
        let n = 10;
        let m = GameModel::star(n, 1.0, StarRisk::Exponential).unwrap();
        let mut x = vec![0.0; n];
        x[0] = (n as f64).ln();
        let g = m.social_cost_gradient(&InvestmentProfile::new(x).unwrap()).unwrap();
        assert!(g[0].abs() < 1e-12);
        for gj in &g[1..] {
            assert!((gj - (1.0 - 2.0 / n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn influence_matrix_matches_aggregates() {
        let models = [
            sd(3.0, 4, 1.0),
            GameModel::two_class(4.0, 0.1, 2, 2, 0.05).unwrap(),
            GameModel::dominant(5.0, 4, 0.45).unwrap(),
            GameModel::star(4, 0.5, StarRisk::Reciprocal).unwrap(),
        ];
        let x = [0.3, 0.1, 0.7, 0.2];
        for m in &models {
            let a = m.influence_matrix().unwrap();
            let z = m.aggregates(&x);
            for i in 0..4 {
                let direct: f64 = (0..4).map(|j| a[(i, j)] * x[j]).sum();
                assert!((direct - z[i]).abs() < 1e-14, "{m}");
            }
        }
        assert!(GameModel::weakest_link(3, 1.0, 1.0).unwrap().influence_matrix().is_none());
    }

    #[test]
    fn risk_stays_positive_for_large_system() {
        let m = sd(50.0, 6, 0.01);
        let x_star = (55.0f64 / 0.01).ln() / 55.0;
        let cost = m.eval_cost(0, &InvestmentProfile::uniform(6, x_star).unwrap()).unwrap();
        assert!(cost.risk > 0.0);
        assert!((cost.risk - 0.01 / 55.0).abs() < 1e-15);
    }
}
