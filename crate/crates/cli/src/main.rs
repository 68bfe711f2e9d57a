//! Batch surface over the detection and inference library: ingest a
//! series, detect variance changes, attach post-selection p-values, or
//! run whole simulation scenarios.
//!
//! Exit codes: 0 success, 2 input error, 3 configuration error,
//! 4 numerical failure.

mod cmd_detect;
mod cmd_simulate;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use varsig::{Algorithm, Conditioning, StatKind, WindowSpec};

#[derive(Parser)]
#[command(
    name = "varsig",
    version,
    about = "Variance changepoint detection with valid post-selection p-values"
)]
struct Cli {
    /// Worker threads for replays and replicates; 0 uses every core
    #[arg(long, global = true, env = "VARSIG_WORKERS", default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect variance changepoints in a series file
    Detect(DetectArgs),
    /// Detect changepoints and compute a p-value for each
    Test(TestArgs),
    /// Run a bundled or custom simulation scenario
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    CusumBinseg,
    CusumWbs,
    LrBinseg,
    LrWbs,
    LrPelt,
}

impl Method {
    fn stat(self) -> StatKind {
        match self {
            Method::CusumBinseg | Method::CusumWbs => StatKind::Cusum,
            _ => StatKind::Lr,
        }
    }

    fn algorithm(self) -> Algorithm {
        match self {
            Method::CusumBinseg | Method::LrBinseg => Algorithm::Binseg,
            Method::CusumWbs | Method::LrWbs => Algorithm::Wbs,
            Method::LrPelt => Algorithm::Pelt,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::CusumBinseg => "cusum-binseg",
            Method::CusumWbs => "cusum-wbs",
            Method::LrBinseg => "lr-binseg",
            Method::LrWbs => "lr-wbs",
            Method::LrPelt => "lr-pelt",
        }
    }
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("centering").required(true).args(["mu", "center"])))]
#[command(group(ArgGroup::new("stop").required(true).args(["lambda", "count", "penalty"])))]
struct DetectArgs {
    /// Input file: one number per line, or CSV with --column
    input: PathBuf,
    /// CSV column: a header name, or a zero-based index for headerless files
    #[arg(long)]
    column: Option<String>,
    /// Known process mean
    #[arg(long)]
    mu: Option<f64>,
    /// Center at the sample mean instead of a known mean
    #[arg(long)]
    center: bool,
    /// Detector: statistic and search combined
    #[arg(long, value_enum, default_value_t = Method::CusumBinseg)]
    method: Method,
    /// Stop splitting below this statistic threshold
    #[arg(long)]
    lambda: Option<f64>,
    /// Keep exactly this many changepoints
    #[arg(long)]
    count: Option<usize>,
    /// Per-changepoint cost penalty, lr-pelt only
    #[arg(long)]
    penalty: Option<f64>,
    /// Random intervals drawn by the wbs methods
    #[arg(long, default_value_t = 100)]
    wbs_intervals: usize,
    /// Seed for interval draws and samplers
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConditioningArg {
    /// The tested changepoint is among the detected ones
    TauInModel,
    /// The whole detected model is reproduced exactly
    FullModel,
}

impl From<ConditioningArg> for Conditioning {
    fn from(c: ConditioningArg) -> Conditioning {
        match c {
            ConditioningArg::TauInModel => Conditioning::TauInModel,
            ConditioningArg::FullModel => Conditioning::FullModel,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    /// Exact for cusum methods, mc-gp otherwise
    Auto,
    Exact,
    McGp,
    McGpIs,
    McNaive,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    Stratified,
    Iid,
}

#[derive(clap::Args)]
struct TestArgs {
    #[command(flatten)]
    detect: DetectArgs,
    /// Window half-width: a positive integer, or 'full' for the largest
    /// symmetric fit
    #[arg(long, value_parser = parse_window)]
    h: WindowSpec,
    /// Null event to condition on
    #[arg(long, value_enum, default_value_t = ConditioningArg::TauInModel)]
    conditioning: ConditioningArg,
    /// P-value engine
    #[arg(long, value_enum, default_value_t = EngineArg::Auto)]
    engine: EngineArg,
    /// Design replays for the surrogate fit
    #[arg(long, default_value_t = 100)]
    n_design: usize,
    /// Draws for the mc-gp-is and mc-naive estimators
    #[arg(long, default_value_t = 100)]
    n_is: usize,
    /// Surrogate kernel length scale
    #[arg(long, default_value_t = 100.0)]
    length_scale: f64,
    /// Layout of design points and proposal draws
    #[arg(long, value_enum, default_value_t = SamplingArg::Stratified)]
    sampling: SamplingArg,
    /// Beta proposal shapes 'a,b' for mc-naive
    #[arg(long, value_parser = parse_pair)]
    proposal: Option<(f64, f64)>,
    /// Nuisance-shape samples averaged per changepoint
    #[arg(long, default_value_t = 1)]
    n_w: usize,
    /// Design replays per shape sample when n-w > 1; half of n-design
    /// when absent
    #[arg(long)]
    n_design_w: Option<usize>,
    /// Family-wise error level for the step-down significance flags
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyArg {
    /// Calibration: sorted p-values against uniform quantiles
    Qq,
    /// Localization: hit rates around the true changepoints
    Accuracy,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Bundled scenario name (fig4a, table1, fig8) or a scenario file path
    scenario: String,
    /// Directory for the CSV and manifest artifacts
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Summary a file scenario produces; bundles choose their own
    #[arg(long, value_enum, default_value_t = StudyArg::Qq)]
    study: StudyArg,
    /// Hit radius for accuracy studies
    #[arg(long, default_value_t = 10)]
    radius: usize,
}

fn parse_window(s: &str) -> Result<WindowSpec, String> {
    if s == "full" {
        return Ok(WindowSpec::Full);
    }
    match s.parse::<usize>() {
        Ok(h) if h > 0 => Ok(WindowSpec::Fixed(h)),
        _ => Err("expected a positive integer or 'full'".into()),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b] = parts.as_slice() else {
        return Err("expected two comma-separated shapes".into());
    };
    let parse = |t: &str| {
        t.parse::<f64>()
            .ok()
            .filter(|v| *v > 0.0 && v.is_finite())
            .ok_or_else(|| format!("'{t}' is not a positive number"))
    };
    Ok((parse(a)?, parse(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and succeed; everything
            // else is a usage error.
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Detect(args) => cmd_detect::run(args),
        Command::Test(args) => cmd_test::run(args),
        Command::Simulate(args) => cmd_simulate::run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
