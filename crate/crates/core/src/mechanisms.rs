//! Pivotal (Clarke) taxes, the Externality mechanism's outcome function and
//! equilibrium taxes, and the voluntary-participation and budget-balance
//! checks.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GameModel, InvestmentProfile, Mechanism, TaxProfile};
use crate::solver::{all_exit_equilibria, social_optimum, ExitCase, ExitEquilibrium, KktCertificate};

/// Tolerance on VP and BB verdicts.
pub const VERDICT_TOL: f64 = 1e-9;

/// One user's message to the Externality mechanism.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    /// Proposed investment profile.
    pub chi: Vec<f64>,
    /// Proposed pricing profile.
    pub pi: Vec<f64>,
}

impl Message {
    pub fn new(chi: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        if chi.len() != pi.len() {
            return Err(Error::invalid(format!("chi has {} entries but pi has {}", chi.len(), pi.len())));
        }
        if chi.iter().chain(&pi).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("message entries must be finite and >= 0"));
        }
        Ok(Message { chi, pi })
    }
}

/// Investment and tax profiles the Externality mechanism assigns to a
/// message profile. Indices `i + 1` and `i + 2` wrap around.
pub fn externality_outcome(messages: &[Message]) -> Result<(InvestmentProfile, TaxProfile)> {
    let n = messages.len();
    if n < 3 {
        return Err(Error::Unsupported(format!("the outcome function needs at least 3 users, got {n}")));
    }
    if let Some(m) = messages.iter().find(|m| m.chi.len() != n || m.pi.len() != n) {
        return Err(Error::invalid(format!(
            "every message must have {n} entries, found chi {} / pi {}",
            m.chi.len(),
            m.pi.len()
        )));
    }
    let x: Vec<f64> = (0..n).map(|k| messages.iter().map(|m| m.chi[k]).sum::<f64>() / n as f64).collect();
    let penalty = |i: usize| {
        let (a, b) = (&messages[i], &messages[(i + 1) % n]);
        (0..n).map(|k| a.pi[k] * (a.chi[k] - b.chi[k]).powi(2)).sum::<f64>()
    };
    let taxes = (0..n)
        .map(|i| {
            let (p1, p2) = (&messages[(i + 1) % n].pi, &messages[(i + 2) % n].pi);
            let price: f64 = (0..n).map(|k| (p1[k] - p2[k]) * x[k]).sum();
            price + penalty(i) - penalty((i + 1) % n)
        })
        .collect();
    Ok((InvestmentProfile::new(x)?, TaxProfile::new(taxes, Mechanism::Externality)?))
}

/// Which exit equilibrium stands for a user's outside option when several
/// exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum EeSelection {
    /// First in enumeration order.
    #[default]
    First,
    /// The one with the highest exit cost for the outlier.
    LeastFavorable,
    /// The one with the lowest exit cost for the outlier.
    MostFavorable,
    /// The one with this case label, else the first.
    Case(ExitCase),
}

impl fmt::Display for EeSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EeSelection::First => f.write_str("first"),
            EeSelection::LeastFavorable => f.write_str("least-favorable"),
            EeSelection::MostFavorable => f.write_str("most-favorable"),
            EeSelection::Case(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for EeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(EeSelection::First),
            "least-favorable" => Ok(EeSelection::LeastFavorable),
            "most-favorable" => Ok(EeSelection::MostFavorable),
            other => other.parse().map(EeSelection::Case),
        }
    }
}

impl EeSelection {
    /// Index into `ees` (all with the same outlier) of the selected one.
    pub fn pick(self, model: &GameModel, ees: &[ExitEquilibrium]) -> usize {
        let exit_cost = |e: &ExitEquilibrium| model.costs_at(e.profile.as_slice())[e.outlier];
        let by_cost = |better: fn(f64, f64) -> bool| {
            let mut best = 0;
            for k in 1..ees.len() {
                if better(exit_cost(&ees[k]), exit_cost(&ees[best])) {
                    best = k;
                }
            }
            best
        };
        match self {
            EeSelection::First => 0,
            EeSelection::LeastFavorable => by_cost(|a, b| a > b),
            EeSelection::MostFavorable => by_cost(|a, b| a < b),
            EeSelection::Case(case) => ees.iter().position(|e| e.case == Some(case)).unwrap_or(0),
        }
    }
}

/// VP outcome for one user against one exit equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EeVerdict {
    pub case: Option<ExitCase>,
    /// The user's tax when this equilibrium is its outside option.
    pub tax: f64,
    /// `g_i(x_hat) - g_i(x*) - t_i`.
    pub benefit: f64,
    pub vp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismReport {
    pub optimum: InvestmentProfile,
    pub taxes: TaxProfile,
    pub budget: f64,
    pub bb: bool,
    /// Outside option used for each user.
    pub selected: Vec<ExitEquilibrium>,
    pub participation_benefit: Vec<f64>,
    pub vp: Vec<bool>,
    /// Every user against every one of its exit equilibria.
    pub per_ee: Vec<Vec<EeVerdict>>,
}

impl MechanismReport {
    pub fn mechanism(&self) -> Mechanism {
        self.taxes.mechanism()
    }

    pub fn all_vp(&self) -> bool {
        self.vp.iter().all(|v| *v)
    }
}

/// `(budget >= -tol, budget)`.
pub fn check_bb(taxes: &TaxProfile) -> (bool, f64) {
    let budget = taxes.budget();
    (budget >= -VERDICT_TOL, budget)
}

/// For each exit equilibrium, whether its outlier is better off
/// participating: `g_i(x*) + t_i <= g_i(x_hat) + tol`.
pub fn check_vp(
    model: &GameModel,
    optimum: &InvestmentProfile,
    taxes: &TaxProfile,
    ees: &[ExitEquilibrium],
) -> Result<Vec<bool>> {
    if taxes.len() != model.n() || optimum.len() != model.n() {
        return Err(Error::invalid("taxes or optimum do not match the model"));
    }
    let at_optimum = model.costs(optimum)?;
    ees.iter()
        .map(|e| {
            let exit = model.costs(&e.profile)?[e.outlier];
            Ok(at_optimum[e.outlier] + taxes[e.outlier] <= exit + VERDICT_TOL)
        })
        .collect()
}

fn participants_cost(costs: &[f64], outlier: usize) -> f64 {
    costs.iter().enumerate().filter(|(j, _)| *j != outlier).map(|(_, g)| g).sum()
}

/// `t_i = sum_{j != i} g_j(x*) - sum_{j != i} g_j(x_hat^i)`.
pub fn pivotal_tax(model: &GameModel, optimum: &InvestmentProfile, ee: &ExitEquilibrium) -> Result<f64> {
    let at_optimum = model.costs(optimum)?;
    let at_exit = model.costs(&ee.profile)?;
    Ok(participants_cost(&at_optimum, ee.outlier) - participants_cost(&at_exit, ee.outlier))
}

fn build_report(
    model: &GameModel,
    optimum: &InvestmentProfile,
    ees: &[Vec<ExitEquilibrium>],
    selection: EeSelection,
    taxes: TaxProfile,
    tax_for: impl Fn(&ExitEquilibrium) -> Result<f64>,
) -> Result<MechanismReport> {
    let n = model.n();
    if ees.len() != n || ees.iter().enumerate().any(|(i, set)| set.is_empty() || set.iter().any(|e| e.outlier != i)) {
        return Err(Error::invalid("need a non-empty exit-equilibrium set for every user, indexed by outlier"));
    }
    let at_optimum = model.costs(optimum)?;
    let per_ee = ees
        .iter()
        .map(|set| {
            set.iter()
                .map(|e| {
                    let tax = tax_for(e)?;
                    let benefit = model.costs(&e.profile)?[e.outlier] - at_optimum[e.outlier] - tax;
                    Ok(EeVerdict { case: e.case, tax, benefit, vp: benefit >= -VERDICT_TOL })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let picks: Vec<usize> = ees.iter().map(|set| selection.pick(model, set)).collect();
    let selected = ees.iter().zip(&picks).map(|(set, &k)| set[k].clone()).collect();
    let participation_benefit: Vec<f64> = per_ee.iter().zip(&picks).map(|(v, &k)| v[k].benefit).collect();
    let vp = participation_benefit.iter().map(|b| *b >= -VERDICT_TOL).collect();
    let (bb, budget) = check_bb(&taxes);
    Ok(MechanismReport {
        optimum: optimum.clone(),
        taxes,
        budget,
        bb,
        selected,
        participation_benefit,
        vp,
        per_ee,
    })
}

/// Pivotal taxes from a precomputed optimum and exit-equilibrium sets.
/// Each user's tax uses its selected equilibrium; `per_ee` holds the tax
/// and verdict each alternative would give.
pub fn pivotal_report(
    model: &GameModel,
    optimum: &InvestmentProfile,
    ees: &[Vec<ExitEquilibrium>],
    selection: EeSelection,
) -> Result<MechanismReport> {
    let mut taxes = Vec::with_capacity(model.n());
    for set in ees {
        let pick = selection.pick(model, set);
        taxes.push(pivotal_tax(model, optimum, set.get(pick).ok_or_else(|| Error::invalid("empty EE set"))?)?);
    }
    let taxes = TaxProfile::new(taxes, Mechanism::Pivotal)?;
    build_report(model, optimum, ees, selection, taxes, |e| pivotal_tax(model, optimum, e))
}

pub fn pivotal_taxes(model: &GameModel) -> Result<MechanismReport> {
    pivotal_taxes_with(model, EeSelection::default())
}

pub fn pivotal_taxes_with(model: &GameModel, selection: EeSelection) -> Result<MechanismReport> {
    let so = social_optimum(model)?;
    let ees = all_exit_equilibria(model)?;
    pivotal_report(model, &so.profile, &ees, selection)
}

/// Equilibrium taxes of the Externality mechanism at a certified optimum:
/// each user pays for the externalities it receives,
/// `t_i = -sum_j x_j df_i/dx_j - h_i'(x_i) x_i`.
pub fn externality_taxes(model: &GameModel, optimum: &InvestmentProfile) -> Result<TaxProfile> {
    let gradient = model.social_cost_gradient(optimum)?;
    let certificate = KktCertificate::from_gradient(optimum.as_slice(), &gradient);
    if !certificate.is_valid() {
        return Err(Error::invalid(format!(
            "profile is not a certified optimum of {model} (stationarity {:.3e}, complementarity {:.3e})",
            certificate.stationarity(),
            certificate.max_complementarity()
        )));
    }
    let x = optimum.as_slice();
    let taxes = TaxProfile::new((0..model.n()).map(|i| model.externality_tax_at(i, x)).collect(), Mechanism::Externality)?;
    let budget = taxes.budget();
    if budget.abs() > VERDICT_TOL {
        return Err(Error::Internal(format!("externality taxes of {model} sum to {budget:.3e}")));
    }
    Ok(taxes)
}

pub fn externality_report(
    model: &GameModel,
    optimum: &InvestmentProfile,
    ees: &[Vec<ExitEquilibrium>],
    selection: EeSelection,
) -> Result<MechanismReport> {
    let taxes = externality_taxes(model, optimum)?;
    let per_user = taxes.as_slice().to_vec();
    build_report(model, optimum, ees, selection, taxes, |e| Ok(per_user[e.outlier]))
}

pub fn externality_equilibrium_taxes(model: &GameModel, optimum: &InvestmentProfile) -> Result<MechanismReport> {
    externality_equilibrium_taxes_with(model, optimum, EeSelection::default())
}

pub fn externality_equilibrium_taxes_with(
    model: &GameModel,
    optimum: &InvestmentProfile,
    selection: EeSelection,
) -> Result<MechanismReport> {
    let ees = all_exit_equilibria(model)?;
    externality_report(model, optimum, &ees, selection)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(chi: &[f64], pi: &[f64]) -> Message {
        Message::new(chi.to_vec(), pi.to_vec()).unwrap()
    }

    #[test]
    fn outcome_worked_example() {
        let messages = [
            msg(&[3.0, 0.0, 0.0], &[1.0, 1.0, 1.0]),
            msg(&[0.0, 3.0, 0.0], &[2.0, 0.0, 0.0]),
            msg(&[0.0, 0.0, 3.0], &[0.0, 0.0, 0.0]),
        ];
        let (x, t) = externality_outcome(&messages).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(t.as_slice(), &[20.0, -3.0, -17.0]);
    }

    #[test]
    fn identical_messages_cost_nothing() {
        let m = msg(&[0.5, 1.0, 2.0, 0.0], &[1.0, 3.0, 0.0, 2.0]);
        let (x, t) = externality_outcome(&vec![m; 4]).unwrap();
        assert_eq!(x.as_slice(), &[0.5, 1.0, 2.0, 0.0]);
        assert!(t.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn outcome_needs_three_users() {
        let m = msg(&[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(externality_outcome(&[m.clone(), m]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dominant_pivotal() {
        let (a, n, c) = (5.0f64, 10.0f64, 0.45f64);
        let r = pivotal_taxes(&GameModel::dominant(a, 10, c).unwrap()).unwrap();
        // t_1 = (N-1) c/(aN) - c (1 + ln((N-1)/c))
        let t1 = (n - 1.0) * c / (a * n) - c * (1.0 + ((n - 1.0) / c).ln());
        assert!((r.taxes[0] - t1).abs() < 1e-12);
        assert!((r.taxes[0] + 1.717079).abs() < 1e-6);
        // Summing the definition term by term: t_j = (c/a)(ln(N/(N-1)) - 1/N).
        let tj = c / a * ((n / (n - 1.0)).ln() - 1.0 / n);
        assert!(r.taxes.as_slice()[1..].iter().all(|t| (t - tj).abs() < 1e-12));
        assert!((r.budget - (t1 + 9.0 * tj)).abs() < 1e-12);
        assert!(!r.bb);
        assert!(r.all_vp());
    }

    #[test]
    fn dominant_externality() {
        let m = GameModel::dominant(5.0, 10, 0.45).unwrap();
        let so = social_optimum(&m).unwrap();
        let r = externality_equilibrium_taxes(&m, &so.profile).unwrap();
        let x1 = so.profile[0];
        assert!((r.taxes[0] - 0.45 * x1 * (0.1 - 1.0)).abs() < 1e-12);
        assert!((r.taxes[0] + 0.381553).abs() < 1e-6);
        assert!(r.taxes.as_slice()[1..].iter().all(|t| (t - 0.45 * x1 / 10.0).abs() < 1e-12));
        assert!(r.bb);
        assert!(!r.vp[3]);
    }

    #[test]
    fn self_dependence_externality_taxes_vanish() {
        let m = GameModel::self_dependence(3.0, 5, 0.4).unwrap();
        let so = social_optimum(&m).unwrap();
        let t = externality_taxes(&m, &so.profile).unwrap();
        assert!(t.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn externality_rejects_uncertified_profile() {
        let m = GameModel::self_dependence(3.0, 5, 0.4).unwrap();
        let x = InvestmentProfile::uniform(5, 1.0).unwrap();
        assert!(matches!(externality_taxes(&m, &x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn selection_parses() {
        assert_eq!("least-favorable".parse::<EeSelection>().unwrap(), EeSelection::LeastFavorable);
        assert_eq!("omega".parse::<EeSelection>().unwrap(), EeSelection::Case(ExitCase::Omega));
        assert!("nope".parse::<EeSelection>().is_err());
    }

    #[test]
    fn case_selection_falls_back_to_first() {
        let m = GameModel::self_dependence(0.5, 3, 0.01).unwrap();
        let ees = crate::solver::exit_equilibria(&m, 0).unwrap();
        assert_eq!(EeSelection::Case(ExitCase::Omega).pick(&m, &ees), 2);
        assert_eq!(EeSelection::Case(ExitCase::Beta).pick(&m, &ees), 0);
    }
}
