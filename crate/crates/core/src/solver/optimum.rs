use crate::error::{Error, Result};
use crate::model::{Family, GameModel, InvestmentProfile, StarRisk};
use crate::numeric::root_decreasing;

use super::convex::{minimize, ExpSum};
use super::{KktCertificate, SocialOptimum};

/// Global minimiser of `sum_i g_i` over `x >= 0`, with its certificate.
pub fn social_optimum(model: &GameModel) -> Result<SocialOptimum> {
    let n = model.n();
    let x = match model.family() {
        Family::SelfDependence { a, c, .. } => {
            let k = a + n as f64 - 1.0;
            vec![(k / c).ln() / k; n]
        }
        Family::WeakestLink { rho, c, .. } => {
            let level = ((n as f64).ln() - rho * c.ln()) / rho;
            vec![level.max(0.0); n]
        }
        Family::Dominant { a, c, .. } => {
            let mut x = vec![0.0; n];
            x[0] = (a * n as f64 / c).ln() / a;
            x
        }
        Family::Star { c, risk, .. } => {
            let mut x = vec![0.0; n];
            x[0] = match risk {
                StarRisk::Exponential => (n as f64 / c).ln().max(0.0),
                StarRisk::Reciprocal => (n as f64 / c).sqrt(),
            };
            x
        }
        Family::TwoClass { a1, n1, n2, c, .. } => {
            let self_weight = a1 + *n1 as f64 - 1.0;
            let (m1, m2) = (*n1 as f64, *n2 as f64);
            let marginal = |x1: f64| self_weight * (-self_weight * x1).exp() + m2 * (-m1 * x1).exp() - c;
            let hint = (self_weight * n as f64 / c).ln() / m1;
            let x1 = root_decreasing(marginal, 0.0, hint)?;
            let mut x = vec![0.0; n];
            x[..*n1].fill(x1);
            x
        }
        Family::General { .. } => return social_optimum_numeric(model),
    };
    certify(model, x)
}

/// Social optimum of a weighted-total-effort model by projected Newton,
/// ignoring any closed form the family may have.
pub fn social_optimum_numeric(model: &GameModel) -> Result<SocialOptimum> {
    let a = model
        .influence_matrix()
        .filter(|_| model.is_weighted_total_effort())
        .ok_or_else(|| Error::Unsupported(format!("numeric optimum needs exponential risks: {model}")))?;
    let n = model.n();
    let rows = (0..n).map(|i| a.row(i).iter().copied().collect()).collect();
    let costs = (0..n).map(|k| model.unit_cost(k)).collect();
    let problem = ExpSum::new(vec![0.0; n], rows, costs);
    let min = minimize(&problem, vec![0.0; n])?;
    log::debug!("numeric optimum of {model}: projected gradient {:e}", min.projected_gradient);
    certify(model, min.x)
}

fn certify(model: &GameModel, x: Vec<f64>) -> Result<SocialOptimum> {
    let profile = InvestmentProfile::from_solver(x);
    let gradient = model.social_cost_gradient(&profile)?;
    let certificate = KktCertificate::from_gradient(profile.as_slice(), &gradient);
    if !certificate.is_valid() {
        return Err(Error::solver(
            format!("social optimum of {model} fails its KKT check"),
            certificate.stationarity().max(certificate.max_complementarity()),
        ));
    }
    Ok(SocialOptimum { profile, certificate })
}
