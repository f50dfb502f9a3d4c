mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const CSV_SCHEMA_HELP: &str = "\
INPUT CSV
  Canonical layout (inferred from the header when no column flags are given):
    y            observed outcome, 0/1
    y_hat        prediction, 0/1 (optional when `score` is present)
    score        risk score in [0, 1]; y_hat = 1 iff score > --threshold (0.5)
    prob_<g>     probability of membership in group <g>, one column per group
    true_group   true group id (optional; enables oracle metrics and checks)
  Lines starting with `#` are ignored, so any CSV this tool writes can be
  read back. Data rows are numbered from 1 in validation messages. Binary
  columns accept 0/1, 0.0/1.0 and true/false. With --exhaustive every row's
  probabilities must sum to 1 (within 1e-6).

EXIT CODES
  0 success, 1 model fit failure, 2 input or parameter validation,
  3 unknown or undefined metric (empty cell), 4 infeasible sensitivity range";

#[derive(Debug, Parser)]
#[command(
    name = "proxyfair",
    version,
    about = "Group performance audits with probabilistic group membership"
)]
#[command(after_help = CSV_SCHEMA_HELP)]
struct Cli {
    /// TOML config file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Weighted (and oracle) metrics, bias diagnostics and bounds as JSON.
    #[command(after_help = CSV_SCHEMA_HELP)]
    Audit(AuditArgs),
    /// Bias-corrected sensitivity intervals over an (eps, eps') range.
    #[command(after_help = CSV_SCHEMA_HELP)]
    Sensitivity(SensitivityArgs),
    /// The bias bound for each metric and group.
    #[command(after_help = CSV_SCHEMA_HELP)]
    Bound(BoundArgs),
    /// Replicates the simulation at one configuration.
    Simulate(SimulateArgs),
    /// Replicates the simulation along one parameter axis.
    Sweep(SweepArgs),
    /// Per-group expected-utility intervals.
    #[command(after_help = CSV_SCHEMA_HELP)]
    Utility(UtilityArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct InputArgs {
    /// Input CSV.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Outcome column (default `y`).
    #[arg(long)]
    pub outcome_col: Option<String>,
    #[arg(long)]
    pub prediction_col: Option<String>,
    #[arg(long)]
    pub score_col: Option<String>,
    /// Group probability column as GROUP=COLUMN; repeatable.
    #[arg(long = "prob-col")]
    pub prob_cols: Vec<String>,
    #[arg(long)]
    pub true_group_col: Option<String>,
    /// Group probabilities cover every group and sum to 1 per row.
    #[arg(long)]
    pub exhaustive: bool,
    /// Score dichotomization threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OutputArgs {
    /// Output file (default stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Comma-separated metrics (default all six).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Comma-separated groups (default all).
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// Population E[I(A=a) | h1 = 1], applied to every metric and group
    /// without a --population entry.
    #[arg(long)]
    pub base_rate: Option<f64>,
    /// Population E[h1], paired with --base-rate.
    #[arg(long)]
    pub h1_rate: Option<f64>,
    /// METRIC:GROUP=BASE_RATE,H1_RATE; repeatable.
    #[arg(long)]
    pub population: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub audit: AuditArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Metric (default fnr).
    #[arg(long)]
    pub metric: Option<String>,
    /// Group to analyse (default: the only group).
    #[arg(long)]
    pub group: Option<String>,
    /// Population E[I(A=a) | h1 = 1]; labelled inputs fall back to the sample value.
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps_hi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps_prime_lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps_prime_hi: Option<f64>,
    /// Relative error levels, e.g. 0.05,0.10,0.20; one analysis per level.
    #[arg(long, value_delimiter = ',')]
    pub eps_rel: Vec<f64>,
    /// Bootstrap replicates (default 1000).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Interval level is 1 - alpha (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Points per axis of the contour grid (default 21).
    #[arg(long)]
    pub grid_resolution: Option<usize>,
    /// Write the contour grid CSV here.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    /// correlated (default) or uncorrelated.
    #[arg(long)]
    pub correlation: Option<String>,
    /// subtract (default) or add.
    #[arg(long)]
    pub sign: Option<String>,
    /// Single pass on the original sample instead of the bootstrap.
    #[arg(long)]
    pub no_resample: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SimArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub beta3: Option<f64>,
    #[arg(long)]
    pub n_population: Option<usize>,
    #[arg(long)]
    pub n_sample: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Prediction threshold on the fitted scores.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per cell (default 100).
    #[arg(long)]
    pub reps: Option<usize>,
    /// bernoulli (default) or threshold.
    #[arg(long)]
    pub membership: Option<String>,
    /// Audited metric (default fnr).
    #[arg(long)]
    pub metric: Option<String>,
    /// Audited group, 0 or 1 (default 1).
    #[arg(long)]
    pub group: Option<u8>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Write the test sample of replication 0 as an input CSV.
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// beta1, beta2, beta3 or n_sample.
    #[arg(long)]
    pub axis: Option<String>,
    /// LO:HI:STEP or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
}

#[derive(Debug, Args)]
pub struct UtilityArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Comma-separated groups (default all).
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// GROUP=P, prevalence of the condition in the group; repeatable.
    #[arg(long)]
    pub prevalence: Vec<String>,
    /// GROUP=X, population E[I(A=a) | Y=1]; repeatable.
    #[arg(long)]
    pub base_rate_pos: Vec<String>,
    /// GROUP=X, population E[I(A=a) | Y=0]; repeatable.
    #[arg(long)]
    pub base_rate_neg: Vec<String>,
    /// GROUP=S, population share; with --overall-prevalence derives the base rates.
    #[arg(long)]
    pub share: Vec<String>,
    #[arg(long)]
    pub overall_prevalence: Option<f64>,
    /// Utility ratio r (default 1).
    #[arg(long)]
    pub r: Option<f64>,
    /// Relative error levels (default 0.05,0.10,0.20).
    #[arg(long, value_delimiter = ',')]
    pub eps_rel: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_resample: bool,
    /// Also write the flat CSV report here.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Report the EU-maximizing threshold for the pooled scores.
    #[arg(long)]
    pub select_threshold: bool,
}

#[derive(Debug)]
pub enum CliError {
    Core(proxyfair::Error),
    Config(String),
}

impl From<proxyfair::Error> for CliError {
    fn from(e: proxyfair::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use proxyfair::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::UnknownMetric(_) | E::UndefinedMetric { .. } | E::EmptyCell { .. } => 3,
                E::InfeasibleRange(_) => 4,
                E::Convergence(_) => 1,
                _ => 2,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Audit(a) => commands::audit(config, a),
        Command::Sensitivity(a) => commands::sensitivity(config, a),
        Command::Bound(a) => commands::bound(config, a),
        Command::Simulate(a) => commands::simulate(config, a),
        Command::Sweep(a) => commands::sweep(config, a),
        Command::Utility(a) => commands::utility(config, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
