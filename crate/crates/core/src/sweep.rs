//! Parameter sweeps over the self-dependence, two-class and dominant-user
//! models, written as CSV, plus a matplotlib script to plot them.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::price_of_anarchy;
use crate::error::{Error, Result};
use crate::mechanisms::{externality_report, pivotal_report, EeSelection};
use crate::model::GameModel;
use crate::numeric::format_sig;
use crate::solver::{all_exit_equilibria, social_optimum};

/// Significant digits of every number in the CSV.
pub const CSV_DIGITS: usize = 12;

pub const PRESETS: [&str; 6] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    SelfDependence,
    TwoClass,
    Dominant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    A,
    C,
    N,
    /// Sweeps `a / c` with `a` fixed.
    AOverC,
    A1,
    A2,
}

impl SweepParameter {
    fn label(self) -> &'static str {
        match self {
            SweepParameter::A => "a",
            SweepParameter::C => "c",
            SweepParameter::N => "N",
            SweepParameter::AOverC => "a/c",
            SweepParameter::A1 => "a1",
            SweepParameter::A2 => "a2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// A sweep: one family, one swept parameter, everything else fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub family: SweepFamily,
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    #[serde(default)]
    pub scale: Scale,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub a1: Option<f64>,
    #[serde(default)]
    pub a2: Option<f64>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    /// Exit-equilibrium selection: `first`, `least-favorable`,
    /// `most-favorable` or a case label.
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_selection() -> String {
    EeSelection::First.to_string()
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| Error::invalid(format!("sweep config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep config serialises")
    }

    pub fn preset(name: &str) -> Result<Self> {
        let base = SweepConfig {
            name: Some(name.to_string()),
            family: SweepFamily::SelfDependence,
            parameter: SweepParameter::A,
            start: 0.0,
            stop: 0.0,
            steps: 2,
            scale: Scale::Linear,
            a: None,
            c: None,
            n: None,
            a1: None,
            a2: None,
            n1: None,
            n2: None,
            selection: EeSelection::LeastFavorable.to_string(),
            output: None,
        };
        let config = match name {
            "fig2" => SweepConfig {
                parameter: SweepParameter::AOverC,
                start: 1.05,
                stop: 3.0,
                steps: 40,
                a: Some(10.0),
                n: Some(6),
                ..base
            },
            "fig3" => SweepConfig { start: 1.1, stop: 10.0, steps: 46, c: Some(1.0), n: Some(6), ..base },
            "fig4" => SweepConfig {
                parameter: SweepParameter::N,
                start: 3.0,
                stop: 20.0,
                steps: 18,
                a: Some(6.0),
                c: Some(1.0),
                ..base
            },
            "fig5" | "fig6" => SweepConfig {
                family: SweepFamily::TwoClass,
                parameter: SweepParameter::A1,
                start: 1.0,
                stop: 10.0,
                steps: 37,
                a2: Some(if name == "fig5" { 0.1 } else { 0.9 }),
                n1: Some(8),
                n2: Some(2),
                c: Some(0.05),
                ..base
            },
            "fig7" => SweepConfig {
                family: SweepFamily::Dominant,
                start: 1.0,
                stop: 15.0,
                steps: 57,
                n: Some(10),
                c: Some(0.45),
                ..base
            },
            other => return Err(Error::invalid(format!("unknown preset {other:?}; expected one of {PRESETS:?}"))),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn selection(&self) -> Result<EeSelection> {
        self.selection.parse()
    }

    fn require<T: Copy>(&self, name: &str, v: Option<T>, swept: bool) -> Result<()> {
        if v.is_none() && !swept {
            return Err(Error::invalid(format!("sweep over {:?} needs a fixed value for {name}", self.family)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::invalid(format!("steps must be >= 2, got {}", self.steps)));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::invalid("sweep range must be finite"));
        }
        if self.scale == Scale::Log && !(self.start > 0.0 && self.stop > 0.0) {
            return Err(Error::invalid("log-scale sweeps need a positive range"));
        }
        self.selection()?;
        use SweepParameter as P;
        let p = self.parameter;
        match self.family {
            SweepFamily::SelfDependence | SweepFamily::Dominant => {
                if !matches!(p, P::A | P::C | P::N | P::AOverC) {
                    return Err(Error::invalid(format!("{p:?} is not a parameter of {:?}", self.family)));
                }
                self.require("a", self.a, p == P::A)?;
                self.require("c", self.c, p == P::C || p == P::AOverC)?;
                self.require("n", self.n, p == P::N)?;
            }
            SweepFamily::TwoClass => {
                if !matches!(p, P::A1 | P::A2 | P::C) {
                    return Err(Error::invalid(format!("{p:?} is not a parameter of the two-class family")));
                }
                self.require("a1", self.a1, p == P::A1)?;
                self.require("a2", self.a2, p == P::A2)?;
                self.require("c", self.c, p == P::C)?;
                self.require("n1", self.n1, false)?;
                self.require("n2", self.n2, false)?;
            }
        }
        if self.grid().iter().all(|v| self.model_at(*v).is_err()) {
            return Err(Error::invalid("no point of the sweep satisfies the model's assumptions"));
        }
        Ok(())
    }

    /// Swept values in order. Integer parameters are rounded.
    pub fn grid(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let t = k as f64 / last;
                let v = match self.scale {
                    Scale::Linear => self.start + (self.stop - self.start) * t,
                    Scale::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * t).exp(),
                };
                if k == self.steps - 1 {
                    self.stop
                } else if self.parameter == SweepParameter::N {
                    v.round()
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn model_at(&self, v: f64) -> Result<GameModel> {
        let pick = |p: SweepParameter, fixed: Option<f64>| if self.parameter == p { Some(v) } else { fixed };
        let n = if self.parameter == SweepParameter::N {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::invalid(format!("n must be a whole number, got {v}")));
            }
            v as usize
        } else {
            self.n.unwrap_or(0)
        };
        let missing = || Error::invalid("missing fixed parameter");
        match self.family {
            SweepFamily::SelfDependence | SweepFamily::Dominant => {
                let a = pick(SweepParameter::A, self.a).ok_or_else(missing)?;
                let c = if self.parameter == SweepParameter::AOverC { a / v } else { pick(SweepParameter::C, self.c).ok_or_else(missing)? };
                if self.family == SweepFamily::SelfDependence {
                    GameModel::self_dependence(a, n, c)
                } else {
                    GameModel::dominant(a, n, c)
                }
            }
            SweepFamily::TwoClass => GameModel::two_class(
                pick(SweepParameter::A1, self.a1).ok_or_else(missing)?,
                pick(SweepParameter::A2, self.a2).ok_or_else(missing)?,
                self.n1.ok_or_else(missing)?,
                self.n2.ok_or_else(missing)?,
                pick(SweepParameter::C, self.c).ok_or_else(missing)?,
            ),
        }
    }

    /// Users whose participation benefit gets a column, with column names.
    fn benefit_columns(&self) -> Vec<(usize, &'static str)> {
        match self.family {
            SweepFamily::SelfDependence => vec![(0, "benefit")],
            SweepFamily::TwoClass => vec![(0, "benefit_n1"), (self.n1.unwrap_or(0), "benefit_n2")],
            SweepFamily::Dominant => vec![(0, "benefit_dominant"), (1, "benefit_other")],
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["param".to_string(), "cases".to_string(), "pivotal_budget".to_string()];
        h.extend(self.benefit_columns().into_iter().map(|(_, name)| name.to_string()));
        h.push("poa".to_string());
        h.push("status".to_string());
        h
    }

    pub fn x_label(&self) -> &'static str {
        self.parameter.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub cases: Vec<String>,
    pub pivotal_budget: f64,
    pub benefits: Vec<f64>,
    pub poa: f64,
    /// `ok`, or the failure kind when the point could not be solved.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub header: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Points outside the model's assumptions, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            let num = |v: f64| if row.status == "ok" { format_sig(v, CSV_DIGITS) } else { String::new() };
            let mut record = vec![
                format_sig(row.param, CSV_DIGITS),
                if row.cases.is_empty() { "-".to_string() } else { row.cases.join(";") },
                num(row.pivotal_budget),
            ];
            record.extend(row.benefits.iter().map(|b| num(*b)));
            record.push(num(row.poa));
            record.push(row.status.clone());
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn ok_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.status == "ok")
    }
}

fn solve_point(config: &SweepConfig, model: &GameModel, selection: EeSelection) -> Result<SweepRow> {
    let so = social_optimum(model)?;
    let ees = all_exit_equilibria(model)?;
    let pivotal = pivotal_report(model, &so.profile, &ees, selection)?;
    let externality = externality_report(model, &so.profile, &ees, selection)?;
    let mut cases: Vec<String> = Vec::new();
    for label in pivotal.selected.iter().filter_map(|e| e.case).map(|c| c.as_str().to_string()) {
        if !cases.contains(&label) {
            cases.push(label);
        }
    }
    Ok(SweepRow {
        param: 0.0,
        cases,
        pivotal_budget: pivotal.budget,
        benefits: config.benefit_columns().iter().map(|(i, _)| externality.participation_benefit[*i]).collect(),
        poa: price_of_anarchy(model)?,
        status: "ok".to_string(),
    })
}

/// Run a sweep. Rows come back in grid order whatever the thread count;
/// `threads = None` uses the global pool.
pub fn run_sweep(config: &SweepConfig, threads: Option<usize>) -> Result<SweepTable> {
    config.validate()?;
    let selection = config.selection()?;
    let grid = config.grid();
    let compute = || -> Vec<std::result::Result<SweepRow, (f64, String)>> {
        grid.par_iter()
            .map(|&v| {
                let model = match config.model_at(v) {
                    Ok(m) => m,
                    Err(e) => return Err((v, e.to_string())),
                };
                Ok(match solve_point(config, &model, selection) {
                    Ok(row) => SweepRow { param: v, ..row },
                    Err(e) => {
                        log::warn!("sweep point {} = {v}: {e}", config.x_label());
                        let status = match e {
                            Error::SolverFailure { .. } => "solver-failure",
                            Error::InvalidInput(_) => "invalid-input",
                            Error::Unsupported(_) => "unsupported",
                            Error::Internal(_) => "internal-error",
                        };
                        SweepRow {
                            param: v,
                            cases: Vec::new(),
                            pivotal_budget: f64::NAN,
                            benefits: vec![f64::NAN; config.benefit_columns().len()],
                            poa: f64::NAN,
                            status: status.to_string(),
                        }
                    }
                })
            })
            .collect()
    };
    let results = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(compute),
        None => compute(),
    };
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err((v, reason)) => {
                log::info!("skipping {} = {v}: {reason}", config.x_label());
                skipped.push((v, reason));
            }
        }
    }
    Ok(SweepTable { header: config.header(), rows, skipped })
}

/// A standalone matplotlib script plotting participation benefit, Pivotal
/// budget and price of anarchy against the swept parameter.
pub fn plot_script(csv_text: &str, csv_path: &Path, x_label: &str, title: &str) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(str::to_string).collect(),
        Err(e) => return Err(Error::invalid(format!("{}: {e}", csv_path.display()))),
    };
    let n = header.len();
    let schema_ok = n >= 6
        && header[..3] == ["param", "cases", "pivotal_budget"]
        && header[n - 2..] == ["poa", "status"]
        && header[3..n - 2].iter().all(|h| h.starts_with("benefit"));
    if !schema_ok {
        return Err(Error::invalid(format!("{} does not have the sweep CSV header: {header:?}", csv_path.display())));
    }
    let benefits: Vec<String> = header[3..n - 2].iter().map(|h| format!("{h:?}")).collect();
    Ok(format!(
        r#"#!/usr/bin/env python3
# Plots {csv} (written by `secgame sweep`).
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, {csv_name:?})
BENEFITS = [{benefits}]

rows = []
with open(CSV, newline="") as fh:
    for row in csv.DictReader(fh):
        if row["status"] == "ok":
            rows.append(row)

x = [float(r["param"]) for r in rows]
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6, 8))
for name in BENEFITS:
    axes[0].plot(x, [float(r[name]) for r in rows], marker=".", label=name)
axes[0].axhline(0.0, color="grey", lw=0.5)
axes[0].set_ylabel("participation benefit")
axes[0].legend()
axes[1].plot(x, [float(r["pivotal_budget"]) for r in rows], marker=".")
axes[1].axhline(0.0, color="grey", lw=0.5)
axes[1].set_ylabel("Pivotal budget")
axes[2].plot(x, [float(r["poa"]) for r in rows], marker=".")
axes[2].set_ylabel("price of anarchy")
axes[2].set_xlabel({x_label:?})
fig.suptitle({title:?})
fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else os.path.splitext(CSV)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
"#,
        csv = csv_path.display(),
        csv_name = csv_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        benefits = benefits.join(", "),
    ))
}

/// Write the plot script next to `csv_path` (same stem, `.py`).
pub fn emit_plot_script(csv_path: &Path, config: &SweepConfig) -> Result<PathBuf> {
    let text = std::fs::read_to_string(csv_path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", csv_path.display())))?;
    let title = config.name.clone().unwrap_or_else(|| format!("{:?} sweep", config.family));
    let script = plot_script(&text, csv_path, config.x_label(), &title)?;
    let out = csv_path.with_extension("py");
    std::fs::write(&out, script).map_err(|e| Error::invalid(format!("cannot write {}: {e}", out.display())))?;
    Ok(out)
}
