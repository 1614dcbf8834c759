use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use secgame::analysis::{
    classify_dominant, classify_self_dependence, price_of_anarchy, star_impossibility, two_class_exit_conditions,
    weakest_link_impossibility,
};
use secgame::mechanisms::{externality_equilibrium_taxes_with, pivotal_taxes_with, EeSelection};
use secgame::solver::{all_exit_equilibria, nash_equilibrium, social_optimum};
use secgame::sweep::{emit_plot_script, run_sweep, SweepConfig};
use secgame::{Error, GameModel, StarRisk};

#[derive(Parser)]
#[command(name = "secgame", version, about = "Security games with positive externalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Social optimum, Nash equilibrium, exit equilibria and price of anarchy.
    Solve(ModelArgs),
    /// Taxes, budget and participation for one mechanism.
    Mechanism {
        #[arg(long, value_enum)]
        which: MechanismKind,
        /// first, least-favorable, most-favorable or a case label.
        #[arg(long, default_value = "first")]
        selection: String,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Which regime a model falls in, with the mechanism verdicts.
    Classify(ModelArgs),
    /// Participation caps for the star and weakest-link counter-examples.
    Impossibility {
        #[arg(long, value_enum)]
        which: ImpossibilityKind,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, value_enum, default_value = "exp")]
        risk: RiskKind,
    },
    /// Run a parameter sweep and write it as CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismKind {
    Pivotal,
    Externality,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImpossibilityKind {
    Star,
    Weakestlink,
}

#[derive(Clone, Copy, ValueEnum)]
enum RiskKind {
    Exp,
    Reciprocal,
}

impl From<RiskKind> for StarRisk {
    fn from(r: RiskKind) -> Self {
        match r {
            RiskKind::Exp => StarRisk::Exponential,
            RiskKind::Reciprocal => StarRisk::Reciprocal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    SelfDependence,
    TwoClass,
    Dominant,
    Star,
    WeakestLink,
    General,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value = "exp")]
    risk: RiskKind,
    /// Influence matrix for `general`, rows separated by `;`, e.g. "2,0.5;0.3,1.5".
    #[arg(long)]
    weights: Option<String>,
    /// Unit costs for `general`, comma separated.
    #[arg(long)]
    costs: Option<String>,
}

fn need<T>(v: Option<T>, name: &str) -> secgame::Result<T> {
    v.ok_or_else(|| Error::InvalidInput(format!("missing --{name}")))
}

fn parse_list(text: &str) -> secgame::Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number {t:?}: {e}"))))
        .collect()
}

impl ModelArgs {
    fn build(&self) -> secgame::Result<GameModel> {
        match self.model {
            ModelKind::SelfDependence => {
                GameModel::self_dependence(need(self.a, "a")?, need(self.n, "n")?, need(self.c, "c")?)
            }
            ModelKind::Dominant => GameModel::dominant(need(self.a, "a")?, need(self.n, "n")?, need(self.c, "c")?),
            ModelKind::TwoClass => GameModel::two_class(
                need(self.a1, "a1")?,
                need(self.a2, "a2")?,
                need(self.n1, "n1")?,
                need(self.n2, "n2")?,
                need(self.c, "c")?,
            ),
            ModelKind::Star => GameModel::star(need(self.n, "n")?, need(self.c, "c")?, self.risk.into()),
            ModelKind::WeakestLink => {
                GameModel::weakest_link(need(self.n, "n")?, need(self.rho, "rho")?, need(self.c, "c")?)
            }
            ModelKind::General => {
                let rows = need(self.weights.as_deref(), "weights")?
                    .split(';')
                    .map(parse_list)
                    .collect::<secgame::Result<Vec<_>>>()?;
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput("--weights must be a square matrix".into()));
                }
                let costs = parse_list(need(self.costs.as_deref(), "costs")?)?;
                GameModel::general(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()), costs)
            }
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML file with the sweep configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    selection: Option<String>,
    /// CSV path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write a matplotlib script next to the CSV.
    #[arg(long)]
    plot: bool,
    /// Worker threads for the sweep (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialise")
}

fn run(cli: Cli) -> secgame::Result<()> {
    match cli.command {
        Command::Solve(args) => {
            let model = args.build()?;
            let so = social_optimum(&model)?;
            let ne = nash_equilibrium(&model)?;
            print(json!({
                "model": model.describe(),
                "social_optimum": to_json(&so),
                "social_cost": model.social_cost(&so.profile)?,
                "nash_equilibrium": to_json(&ne),
                "nash_cost": model.social_cost(&ne)?,
                "price_of_anarchy": price_of_anarchy(&model)?,
                "exit_equilibria": to_json(&all_exit_equilibria(&model)?),
            }));
        }
        Command::Mechanism { which, selection, model } => {
            let selection: EeSelection = selection.parse()?;
            let model = model.build()?;
            let report = match which {
                MechanismKind::Pivotal => pivotal_taxes_with(&model, selection)?,
                MechanismKind::Externality => {
                    externality_equilibrium_taxes_with(&model, &social_optimum(&model)?.profile, selection)?
                }
            };
            print(json!({ "model": model.describe(), "report": to_json(&report) }));
        }
        Command::Classify(args) => {
            let verdict = match args.model {
                ModelKind::SelfDependence => {
                    to_json(&classify_self_dependence(need(args.a, "a")?, need(args.n, "n")?, need(args.c, "c")?)?)
                }
                ModelKind::Dominant => {
                    to_json(&classify_dominant(need(args.a, "a")?, need(args.n, "n")?, need(args.c, "c")?)?)
                }
                ModelKind::TwoClass => to_json(&two_class_exit_conditions(
                    need(args.a1, "a1")?,
                    need(args.a2, "a2")?,
                    need(args.n1, "n1")?,
                    need(args.n2, "n2")?,
                    need(args.c, "c")?,
                )?),
                _ => return Err(Error::Unsupported("classify handles self-dependence, dominant and two-class".into())),
            };
            print(json!({ "model": args.build()?.describe(), "classification": verdict }));
        }
        Command::Impossibility { which, n, c, rho, risk } => {
            let report = match which {
                ImpossibilityKind::Star => star_impossibility(n, c, risk.into())?,
                ImpossibilityKind::Weakestlink => weakest_link_impossibility(n, rho, c)?,
            };
            print(to_json(&report));
        }
        Command::Sweep(args) => sweep(args)?,
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> secgame::Result<()> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), _) => SweepConfig::preset(name)?,
        (None, Some(path)) => SweepConfig::from_toml_str(
            &std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?,
        )?,
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    config.start = args.start.unwrap_or(config.start);
    config.stop = args.stop.unwrap_or(config.stop);
    config.steps = args.steps.unwrap_or(config.steps);
    if let Some(s) = args.selection {
        config.selection = s;
    }
    if args.output.is_some() {
        config.output = args.output;
    }
    config.validate()?;
    if args.threads == Some(0) {
        return Err(Error::InvalidInput("--threads must be at least 1".into()));
    }

    let table = run_sweep(&config, args.threads)?;
    let csv = table.to_csv();
    match &config.output {
        Some(path) => {
            std::fs::write(path, csv)
                .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
            log::info!("wrote {} rows to {}", table.rows.len(), path.display());
            if args.plot {
                let script = emit_plot_script(path, &config)?;
                log::info!("wrote {}", script.display());
            }
        }
        None if args.plot => return Err(Error::InvalidInput("--plot needs --output".into())),
        None => print!("{csv}"),
    }
    Ok(())
}

fn print(v: Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidInput(_) | Error::Unsupported(_) => 2,
                Error::SolverFailure { .. } => 3,
                Error::Internal(_) => 1,
            })
        }
    }
}
