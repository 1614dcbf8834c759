//! Security games with positive externalities: social optima, Nash and
//! exit equilibria, Pivotal and Externality taxes, regime classification
//! and parameter sweeps.

pub mod analysis;
pub mod error;
pub mod model;
pub mod numeric;
pub mod mechanisms;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{CostBreakdown, Family, GameModel, InvestmentProfile, Mechanism, StarRisk, TaxProfile};
