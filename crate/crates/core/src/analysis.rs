//! Regime classification for the self-dependence and dominant-user models,
//! the two-class existence conditions, the star and weakest-link tax-cap
//! bounds, and the price of anarchy.
//!
//! Every parameter inequality is compared in log space.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::{externality_report, pivotal_report, EeSelection, VERDICT_TOL};
use crate::model::{GameModel, StarRisk};
use crate::solver::{all_exit_equilibria, nash_equilibrium, social_optimum, ExitCase, ExitEquilibrium};

/// Whether a property holds throughout a regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Always,
    Never,
}

impl Verdict {
    pub fn holds(self) -> bool {
        self == Verdict::Always
    }
}

/// A log-space inequality `lhs <= rhs` (or `>=`), evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub description: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Condition {
    fn le(description: &'static str, lhs: f64, rhs: f64) -> Self {
        Condition { description, lhs, rhs, holds: lhs <= rhs }
    }

    fn ge(description: &'static str, lhs: f64, rhs: f64) -> Self {
        Condition { description, lhs, rhs, holds: lhs >= rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub case: ExitCase,
    pub conditions: Vec<Condition>,
    pub vp_externality: Verdict,
    pub bb_pivotal: Verdict,
    /// Another case selected by the very same parameter condition.
    pub shares_condition_with: Option<ExitCase>,
}

fn need_three(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::invalid(format!("regime analysis needs n >= 3, got {n}")));
    }
    Ok(())
}

/// Every self-dependence case consistent with `(a, n, c)`. Ties go to the
/// weak inequality, so both sides of a boundary are reported on it.
pub fn classify_self_dependence(a: f64, n: usize, c: f64) -> Result<Vec<RegimeVerdict>> {
    GameModel::self_dependence(a, n, c)?;
    need_three(n)?;
    let m = n as f64;
    let spread = (1.0 + (m - 2.0) / a).ln();
    let l1 = (a / c).ln();
    let verdict = |case, conditions, v, shares| RegimeVerdict {
        case,
        conditions,
        vp_externality: v,
        bb_pivotal: v,
        shares_condition_with: shares,
    };
    let mut out = Vec::new();
    if a >= 1.0 {
        // (1 + (N-2)/a)^(N-1) vs (a/c)^(a-1)
        let lhs = (m - 1.0) * spread;
        let rhs = (a - 1.0) * l1;
        let free = Condition::ge("(N-1) ln(1+(N-2)/a) >= (a-1) ln(a/c)", lhs, rhs);
        if free.holds {
            out.push(verdict(ExitCase::Alpha, vec![free], Verdict::Never, None));
        }
        let both = Condition::le("(N-1) ln(1+(N-2)/a) <= (a-1) ln(a/c)", lhs, rhs);
        if a > 1.0 && both.holds {
            out.push(verdict(ExitCase::Beta, vec![both], Verdict::Never, None));
        }
    } else {
        out.push(verdict(ExitCase::Gamma, Vec::new(), Verdict::Never, None));
        // (1 + (N-2)/a)^a vs (a/c)^(1-a)
        let cond = Condition::le("a ln(1+(N-2)/a) <= (1-a) ln(a/c)", a * spread, (1.0 - a) * l1);
        if cond.holds {
            out.push(verdict(ExitCase::Omega, vec![cond.clone()], Verdict::Always, Some(ExitCase::Zeta)));
            out.push(verdict(ExitCase::Zeta, vec![cond], Verdict::Always, Some(ExitCase::Omega)));
        }
    }
    Ok(out)
}

/// Dominant-user regime: the dominant user free-rides on exit iff
/// `a < N - 1`; a tie counts as the other case.
pub fn classify_dominant(a: f64, n: usize, c: f64) -> Result<RegimeVerdict> {
    GameModel::dominant(a, n, c)?;
    need_three(n)?;
    let cond = Condition::le("a < N-1", a, n as f64 - 1.0);
    let case = if a < n as f64 - 1.0 { ExitCase::DominantAlpha } else { ExitCase::DominantBeta };
    Ok(RegimeVerdict {
        case,
        conditions: vec![Condition { holds: case == ExitCase::DominantAlpha, ..cond }],
        vp_externality: Verdict::Never,
        bb_pivotal: Verdict::Never,
        shares_condition_with: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoClassConditions {
    /// A reliant outlier keeps investing alone.
    pub reliant_invests: Condition,
    /// A self-dependent outlier free-rides.
    pub self_dependent_free_rides: Condition,
    /// A reliant outlier free-riding is always an exit equilibrium.
    pub reliant_free_rides: bool,
}

pub fn two_class_exit_conditions(a1: f64, a2: f64, n1: usize, n2: usize, c: f64) -> Result<TwoClassConditions> {
    GameModel::two_class(a1, a2, n1, n2, c)?;
    let n = (n1 + n2) as f64;
    let reliant_invests = Condition::le(
        "ln((a1+N-2)/c) <= (1/a2) ln(a2/c)",
        (a1 + n - 2.0).ln() - c.ln(),
        (a2 / c).ln() / a2,
    );
    let (m1, m2) = (n1 as f64, n2 as f64);
    let scaled = ((a1 + m1 - 2.0).ln() + (a1 - 1.0) / (m1 - 1.0) * (c / a1).ln()).exp();
    let self_dependent_free_rides =
        Condition::ge("ln((a1+N1-2)(c/a1)^((a1-1)/(N1-1)) + N2) >= ln a1", (scaled + m2).ln(), a1.ln());
    Ok(TwoClassConditions { reliant_invests, self_dependent_free_rides, reliant_free_rides: true })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpossibilityReport {
    pub model: String,
    /// Largest tax each user accepts under VP, from the closed forms.
    pub per_user_cap: Vec<f64>,
    pub cap_sum: f64,
    /// `cap_sum < 0`: no tax rule can give both VP and weak BB.
    pub impossible: bool,
    /// Whether the closed forms describe an actual exit equilibrium here.
    pub closed_form_valid: bool,
    /// Cap sum recomputed from the solvers, using the exit equilibrium
    /// least favourable to each outlier.
    pub numeric_cap_sum: f64,
    /// Cap sums under every other exit-equilibrium choice for the outliers
    /// that have several.
    pub alternative_cap_sums: Vec<f64>,
    /// Number of users at which the cap sum changes sign.
    pub threshold: Option<f64>,
    /// Whether Externality taxes achieve BB and VP against every exit
    /// equilibrium (checked when the cap sum is not negative).
    pub externality_bb_vp: Option<bool>,
    pub warnings: Vec<String>,
}

fn numeric_caps(model: &GameModel, ees: &[Vec<ExitEquilibrium>]) -> Result<(f64, Vec<f64>)> {
    let so = social_optimum(model)?;
    let at_optimum = model.costs(&so.profile)?;
    let cap = |e: &ExitEquilibrium| -> Result<f64> { Ok(model.costs(&e.profile)?[e.outlier] - at_optimum[e.outlier]) };
    let mut headline = 0.0;
    let mut alternatives = Vec::new();
    for set in ees {
        let pick = EeSelection::LeastFavorable.pick(model, set);
        let chosen = cap(&set[pick])?;
        headline += chosen;
        for (k, e) in set.iter().enumerate() {
            if k != pick {
                alternatives.push(cap(e)? - chosen);
            }
        }
    }
    // Alternatives are reported as full sums.
    let alternatives = alternatives.into_iter().map(|d| headline + d).collect();
    Ok((headline, alternatives))
}

fn externality_passes(model: &GameModel, ees: &[Vec<ExitEquilibrium>]) -> Result<bool> {
    let so = social_optimum(model)?;
    let report = externality_report(model, &so.profile, ees, EeSelection::First)?;
    Ok(report.bb && report.per_ee.iter().flatten().all(|v| v.vp))
}

/// VP tax caps in the star topology and their sum.
pub fn star_impossibility(n: usize, c: f64, risk: StarRisk) -> Result<ImpossibilityReport> {
    let model = GameModel::star(n, c, risk)?;
    let mut warnings = Vec::new();
    if n < 3 {
        warnings.push(format!("star with {n} users is degenerate: the root has a single leaf"));
    }
    let m = n as f64;
    let (root, leaf, closed_form_valid) = match risk {
        StarRisk::Exponential => (c - c / m - c * m.ln(), c / (m - 1.0) - c / m, c <= 1.0),
        StarRisk::Reciprocal => {
            let s = c.sqrt();
            (2.0 * s - s / m.sqrt() - s * m.sqrt(), s / (m - 1.0).sqrt() - s / m.sqrt(), true)
        }
    };
    if !closed_form_valid {
        warnings.push(format!("c = {c} >= 1: the root would not invest alone; the closed-form caps do not apply"));
    }
    let mut per_user_cap = vec![leaf; n];
    per_user_cap[0] = root;
    let cap_sum: f64 = per_user_cap.iter().sum();
    let ees = all_exit_equilibria(&model)?;
    let (numeric_cap_sum, alternative_cap_sums) = numeric_caps(&model, &ees)?;
    let governing = if closed_form_valid { cap_sum } else { numeric_cap_sum };
    let impossible = governing < -VERDICT_TOL;
    let externality_bb_vp = if impossible { None } else { Some(externality_passes(&model, &ees)?) };
    Ok(ImpossibilityReport {
        model: model.describe(),
        per_user_cap,
        cap_sum,
        impossible,
        closed_form_valid,
        numeric_cap_sum,
        alternative_cap_sums,
        threshold: None,
        externality_bb_vp,
        warnings,
    })
}

/// `N c (1 + (1/rho) ln(2^(1-rho) / N))` for real `N`.
pub fn weakest_link_cap_sum(n: f64, rho: f64, c: f64) -> f64 {
    n * c * (1.0 + ((1.0 - rho) * 2f64.ln() - n.ln()) / rho)
}

/// `e^rho 2^(1-rho)`: the user count where the weakest-link cap sum
/// changes sign.
pub fn weakest_link_threshold(rho: f64) -> f64 {
    (rho + (1.0 - rho) * 2f64.ln()).exp()
}

/// VP tax caps in the smoothed weakest-link game and their sum.
pub fn weakest_link_impossibility(n: usize, rho: f64, c: f64) -> Result<ImpossibilityReport> {
    let model = GameModel::weakest_link(n, rho, c)?;
    let m = n as f64;
    let cap = c * (1.0 + ((1.0 - rho) * 2f64.ln() - m.ln()) / rho);
    let per_user_cap = vec![cap; n];
    let cap_sum = weakest_link_cap_sum(m, rho, c);
    // The closed forms need the outlier's level (1/rho) ln(2^(1-rho)/c^rho) >= 0.
    let closed_form_valid = rho * c.ln() <= (1.0 - rho) * 2f64.ln();
    let mut warnings = Vec::new();
    if !closed_form_valid {
        warnings.push(format!(
            "c^rho > 2^(1-rho): the outlier would not invest on exit; the closed-form caps do not apply"
        ));
    }
    let ees = all_exit_equilibria(&model)?;
    let (numeric_cap_sum, alternative_cap_sums) = numeric_caps(&model, &ees)?;
    let governing = if closed_form_valid { cap_sum } else { numeric_cap_sum };
    let impossible = governing < -VERDICT_TOL;
    let externality_bb_vp = if impossible { None } else { Some(externality_passes(&model, &ees)?) };
    Ok(ImpossibilityReport {
        model: model.describe(),
        per_user_cap,
        cap_sum,
        impossible,
        closed_form_valid,
        numeric_cap_sum,
        alternative_cap_sums,
        threshold: Some(weakest_link_threshold(rho)),
        externality_bb_vp,
        warnings,
    })
}

/// `sum g(NE) / sum g(SO)`.
pub fn price_of_anarchy(model: &GameModel) -> Result<f64> {
    let ne = nash_equilibrium(model)?;
    let so = social_optimum(model)?;
    Ok(model.social_cost(&ne)? / model.social_cost(&so.profile)?)
}

/// Verdicts of the mechanisms module for one classified case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericVerdict {
    pub case: ExitCase,
    /// Externality VP for every outlier under this case's exit equilibrium.
    pub vp_externality: bool,
    /// Pivotal budget when every outlier's outside option is this case.
    pub pivotal_budget: f64,
    pub bb_pivotal: bool,
}

/// Recompute VP (Externality) and BB (Pivotal) from actual taxes and exit
/// equilibria, for every case the classifier returns.
pub fn self_dependence_numeric_verdicts(a: f64, n: usize, c: f64) -> Result<Vec<(RegimeVerdict, Option<NumericVerdict>)>> {
    let model = GameModel::self_dependence(a, n, c)?;
    let cases = classify_self_dependence(a, n, c)?;
    let so = social_optimum(&model)?;
    let ees = all_exit_equilibria(&model)?;
    cases
        .into_iter()
        .map(|verdict| {
            let case = verdict.case;
            if !ees.iter().all(|set| set.iter().any(|e| e.case == Some(case))) {
                return Ok((verdict, None));
            }
            let selection = EeSelection::Case(case);
            let ext = externality_report(&model, &so.profile, &ees, selection)?;
            let piv = pivotal_report(&model, &so.profile, &ees, selection)?;
            let numeric = NumericVerdict {
                case,
                vp_externality: ext.all_vp(),
                pivotal_budget: piv.budget,
                bb_pivotal: piv.bb,
            };
            Ok((verdict, Some(numeric)))
        })
        .collect()
}

/// A disagreement between the classifier and the numeric verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub a: f64,
    pub n: usize,
    pub c: f64,
    pub case: ExitCase,
    pub reason: String,
}

/// Run the cross-check on many `(a, n, c)` triples in parallel; results in
/// input order.
pub fn cross_validate_self_dependence(samples: &[(f64, usize, f64)]) -> Vec<Mismatch> {
    samples
        .par_iter()
        .map(|&(a, n, c)| match self_dependence_numeric_verdicts(a, n, c) {
            Err(e) => vec![Mismatch { a, n, c, case: ExitCase::Alpha, reason: format!("solver error: {e}") }],
            Ok(rows) => rows
                .into_iter()
                .filter_map(|(verdict, numeric)| {
                    let reason = match numeric {
                        None => Some("no exit equilibrium with this case".to_string()),
                        Some(nv) if nv.vp_externality != verdict.vp_externality.holds() => {
                            Some(format!("externality VP is {}", nv.vp_externality))
                        }
                        Some(nv) if nv.bb_pivotal != verdict.bb_pivotal.holds() => {
                            Some(format!("pivotal budget is {:.3e}", nv.pivotal_budget))
                        }
                        Some(_) => None,
                    }?;
                    Some(Mismatch { a, n, c, case: verdict.case, reason })
                })
                .collect(),
        })
        .flatten()
        .collect()
}
