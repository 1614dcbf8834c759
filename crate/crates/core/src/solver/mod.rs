//! Social optima, Nash equilibria and exit equilibria.
//!
//! Closed forms are used wherever a family admits them; scalar equations
//! are solved by bisection; the general weighted-total-effort model goes
//! through a projected Newton method. Every result carries or can be
//! checked against first-order (KKT) conditions.

mod convex;
mod exit;
mod nash;
mod optimum;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use exit::{all_exit_equilibria, check_exit_equilibrium, exit_equilibria, exit_kkt_violation, ExitCheck};
pub use nash::{best_response, nash_equilibrium, nash_violation};
pub use optimum::{social_optimum, social_optimum_numeric};
pub use oracle::{brute_force_social_optimum, GridOptimum};

use crate::error::Error;
use crate::model::InvestmentProfile;

/// Maximum stationarity residual accepted in a certificate.
pub const STATIONARITY_TOL: f64 = 1e-8;
/// Maximum `lambda_k * x_k` accepted in a certificate.
pub const COMPLEMENTARITY_TOL: f64 = 1e-9;

/// First-order optimality evidence for `min_{x >= 0} G(x)`.
///
/// With `lambda = max(grad, 0)` componentwise, the residual `grad - lambda`
/// must vanish and `lambda_k x_k` must be zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktCertificate {
    pub multipliers: Vec<f64>,
    pub residuals: Vec<f64>,
    pub support: Vec<bool>,
    pub complementarity: Vec<f64>,
}

impl KktCertificate {
    pub fn from_gradient(x: &[f64], gradient: &[f64]) -> Self {
        let multipliers: Vec<f64> = gradient.iter().map(|g| g.max(0.0)).collect();
        let residuals = gradient.iter().zip(&multipliers).map(|(g, l)| g - l).collect();
        let complementarity = multipliers.iter().zip(x).map(|(l, v)| l * v).collect();
        KktCertificate { multipliers, residuals, support: x.iter().map(|v| *v > 0.0).collect(), complementarity }
    }

    pub fn stationarity(&self) -> f64 {
        self.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    pub fn max_complementarity(&self) -> f64 {
        self.complementarity.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.multipliers.iter().all(|l| *l >= 0.0)
            && self.stationarity() <= STATIONARITY_TOL
            && self.max_complementarity() <= COMPLEMENTARITY_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocialOptimum {
    pub profile: InvestmentProfile,
    pub certificate: KktCertificate,
}

/// Regime and support-pattern labels attached to exit equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ExitCase {
    /// Self-dependence, `a >= 1`: outlier free-rides, participants invest.
    Alpha,
    /// Self-dependence, `a > 1`: everyone invests.
    Beta,
    /// Self-dependence, `a < 1`: outlier free-rides, participants invest.
    Gamma,
    /// Self-dependence, `a < 1`: only the outlier invests.
    Omega,
    /// Self-dependence, `a < 1`: everyone invests.
    Zeta,
    /// Dominant user exits and free-rides on the others.
    DominantAlpha,
    /// Dominant user exits and keeps investing alone.
    DominantBeta,
    SelfDependentFreeRides,
    SelfDependentInvests,
    SelfDependentAlone,
    ReliantFreeRides,
    ReliantCoInvests,
    ReliantInvests,
    /// Star root exits and protects everyone alone.
    RootInvests,
    /// Star root exits and free-rides on the leaves.
    LeavesInvest,
}

impl ExitCase {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitCase::Alpha => "alpha",
            ExitCase::Beta => "beta",
            ExitCase::Gamma => "gamma",
            ExitCase::Omega => "omega",
            ExitCase::Zeta => "zeta",
            ExitCase::DominantAlpha => "dominant-alpha",
            ExitCase::DominantBeta => "dominant-beta",
            ExitCase::SelfDependentFreeRides => "self-dependent-free-rides",
            ExitCase::SelfDependentInvests => "self-dependent-invests",
            ExitCase::SelfDependentAlone => "self-dependent-alone",
            ExitCase::ReliantFreeRides => "reliant-free-rides",
            ExitCase::ReliantCoInvests => "reliant-co-invests",
            ExitCase::ReliantInvests => "reliant-invests",
            ExitCase::RootInvests => "root-invests",
            ExitCase::LeavesInvest => "leaves-invest",
        }
    }
}

impl ExitCase {
    pub const ALL: [ExitCase; 15] = [
        ExitCase::Alpha,
        ExitCase::Beta,
        ExitCase::Gamma,
        ExitCase::Omega,
        ExitCase::Zeta,
        ExitCase::DominantAlpha,
        ExitCase::DominantBeta,
        ExitCase::SelfDependentFreeRides,
        ExitCase::SelfDependentInvests,
        ExitCase::SelfDependentAlone,
        ExitCase::ReliantFreeRides,
        ExitCase::ReliantCoInvests,
        ExitCase::ReliantInvests,
        ExitCase::RootInvests,
        ExitCase::LeavesInvest,
    ];
}

impl FromStr for ExitCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ExitCase::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown case label {s:?}")))
    }
}

impl fmt::Display for ExitCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Equilibrium after `outlier` leaves: it best-responds alone while the
/// remaining users minimise their joint cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitEquilibrium {
    pub outlier: usize,
    pub profile: InvestmentProfile,
    pub case: Option<ExitCase>,
}

impl ExitEquilibrium {
    pub fn support(&self) -> Vec<bool> {
        self.profile.support()
    }

    pub fn outlier_invests(&self) -> bool {
        self.profile[self.outlier] > 0.0
    }
}
