//! `fuelguard` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fuelguard::detector::ScoreMode;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(fuelguard::Error),
}

impl From<fuelguard::Error> for CliError {
    fn from(e: fuelguard::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use fuelguard::Error;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(Error::InvalidArgument(_) | Error::UnknownFeature(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => {
                write!(f, "{e}")?;
                let mut source = std::error::Error::source(e);
                while let Some(s) = source {
                    write!(f, ": {s}")?;
                    source = s.source();
                }
                Ok(())
            }
        }
    }
}

/// Fuel-consumption anomaly detection for generator telemetry.
#[derive(Debug, Parser)]
#[command(name = "fuelguard", version)]
struct Cli {
    /// TOML configuration file with sections; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic labelled telemetry CSV.
    Generate(GenerateArgs),
    /// Split, scale and train an autoencoder on normal records.
    Train(TrainArgs),
    /// Score records and write per-record verdicts and severity classes.
    Detect(DetectArgs),
    /// Run the label-assistance loop, then evaluate once on the test split.
    Assist(AssistArgs),
    /// Emit feature-importance, correlation and threshold-sweep CSVs.
    Analyze(AnalyzeArgs),
    /// Compute detection metrics of a model on a labelled CSV.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of records [default: 6000].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Fraction of anomalous records [default: 0.351].
    #[arg(long)]
    rate: Option<f64>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV [default: paths.input from the config].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Labelled telemetry CSV.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Directory for output artifacts [default: current directory].
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    /// Seed for splitting, initialisation and shuffling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs [default: 500].
    #[arg(long)]
    epochs: Option<usize>,
    /// Gradient-descent step size [default: 0.01].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 weight penalty [default: 0.0001].
    #[arg(long)]
    lambda: Option<f64>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Width of the layers around the latent code [default: 8].
    #[arg(long)]
    hidden_width: Option<usize>,
    /// Latent code width [default: 4].
    #[arg(long)]
    latent_width: Option<usize>,
    /// Comma-separated feature columns [default: all 13 numeric features].
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct ScoreFlags {
    /// Model JSON written by `train` or `assist`.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Scaler JSON [default: the scaler recorded in the model file].
    #[arg(long, value_name = "FILE")]
    scaler: Option<PathBuf>,
    /// Score mode: priority-feature or mean [default: priority-feature].
    #[arg(long)]
    score_mode: Option<ScoreMode>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    score: ScoreFlags,
    /// Anomaly threshold; scores strictly above it are anomalies.
    #[arg(long)]
    tau: Option<f64>,
    /// Results CSV [default: <out-dir>/detections.csv].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AssistArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Score mode: priority-feature or mean [default: priority-feature].
    #[arg(long)]
    score_mode: Option<ScoreMode>,
    /// Target validation accuracy [default: 0.9].
    #[arg(long)]
    min_accuracy: Option<f64>,
    /// Target validation recall [default: 0.9].
    #[arg(long)]
    min_recall: Option<f64>,
    /// Round limit [default: 3].
    #[arg(long)]
    max_rounds: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    score: ScoreFlags,
    /// Seed for the forest [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Trees in the forest [default: 100].
    #[arg(long)]
    trees: Option<usize>,
    /// Maximum tree depth [default: 8].
    #[arg(long)]
    max_depth: Option<usize>,
    /// Comma-separated feature columns [default: all 13 numeric features].
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    score: ScoreFlags,
    /// Anomaly threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Metrics JSON [default: <out-dir>/metrics.json].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.input.is_some() {
            cfg.paths.input.clone_from(&self.input);
        }
        if self.out_dir.is_some() {
            cfg.paths.out_dir.clone_from(&self.out_dir);
        }
    }
}

impl TrainFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.train.epochs, self.epochs);
        set(&mut cfg.train.learning_rate, self.learning_rate);
        set(&mut cfg.train.lambda, self.lambda);
        set(&mut cfg.train.batch_size, self.batch_size);
        set(&mut cfg.model.hidden_width, self.hidden_width);
        set(&mut cfg.model.latent_width, self.latent_width);
        set(&mut cfg.features, self.features.clone());
    }
}

impl ScoreFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.model.is_some() {
            cfg.paths.model.clone_from(&self.model);
        }
        if self.scaler.is_some() {
            cfg.paths.scaler.clone_from(&self.scaler);
        }
        set(&mut cfg.detect.score_mode, self.score_mode);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => {
            if let Some(n) = a.n {
                cfg.generator.n = usize::try_from(n).map_err(|_| CliError::Usage(format!("--n {n} is too large")))?;
            }
            set(&mut cfg.generator.anomaly_rate, a.rate);
            set(&mut cfg.seed, a.seed);
            let out = a
                .out
                .or_else(|| cfg.paths.input.clone())
                .ok_or_else(|| CliError::Usage("generate needs --out".into()))?;
            commands::generate(&cfg, &out)
        }
        Command::Train(a) => {
            a.data.apply(&mut cfg);
            a.train.apply(&mut cfg);
            commands::train_cmd(&cfg)
        }
        Command::Detect(a) => {
            a.data.apply(&mut cfg);
            a.score.apply(&mut cfg);
            set(&mut cfg.detect.tau, a.tau.map(Some));
            commands::detect(&cfg, a.out.as_deref())
        }
        Command::Assist(a) => {
            a.data.apply(&mut cfg);
            a.train.apply(&mut cfg);
            set(&mut cfg.detect.score_mode, a.score_mode);
            set(&mut cfg.assist.min_accuracy, a.min_accuracy);
            set(&mut cfg.assist.min_recall, a.min_recall);
            set(&mut cfg.assist.max_rounds, a.max_rounds);
            commands::assist(&cfg)
        }
        Command::Analyze(a) => {
            a.data.apply(&mut cfg);
            a.score.apply(&mut cfg);
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.analysis.trees, a.trees);
            set(&mut cfg.analysis.max_depth, a.max_depth);
            set(&mut cfg.features, a.features);
            commands::analyze(&cfg)
        }
        Command::Evaluate(a) => {
            a.data.apply(&mut cfg);
            a.score.apply(&mut cfg);
            set(&mut cfg.detect.tau, a.tau.map(Some));
            commands::evaluate(&cfg, a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
