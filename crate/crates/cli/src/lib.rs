//! `fcbm` command line: synthetic data, annotation, training, evaluation,
//! ablation, intervention, Pareto export and the inference service.

mod commands;
mod error;

use std::ffi::OsString;
use std::net::IpAddr;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fcbm_core::data::{Preset, Split};
use fcbm_core::model::HeadKind;
use fcbm_core::training::Regime;

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "FCBM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fcbm", version, about = "Leakage-aware concept bottleneck models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Score concepts by embedding similarity and normalise them.
    Annotate(AnnotateArgs),
    /// Train a model; writes a checkpoint and a training log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train and evaluate every head × leakage-loss cell.
    Ablate(AblateArgs),
    /// Cumulative test-time intervention curve.
    Intervene(InterveneArgs),
    /// Leakage against concept error across saved reports.
    Pareto(ParetoArgs),
    /// Serve a checkpoint over HTTP.
    Serve(ServeArgs),
    /// Call a running service.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON file: a full generator spec, or `{"preset": .., "seed": .., <field overrides>}`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Store embeddings inline in the sample records instead of a binary file.
    #[arg(long)]
    pub inline: bool,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSONL of `{"name": .., "e": [..]}`.
    #[arg(long)]
    pub concept_embs: PathBuf,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags that override the JSON training config.
#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub head: Option<HeadKind>,
    #[arg(long)]
    pub leakage_loss: Option<bool>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_leak: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, conflicts_with = "no_patience")]
    pub patience: Option<usize>,
    /// Disable early stopping.
    #[arg(long)]
    pub no_patience: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON training config; omitted fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the rmse tier analysis here.
    #[arg(long)]
    pub tiers: Option<PathBuf>,
    /// Also write per-concept activation histograms here.
    #[arg(long)]
    pub activations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Curve path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// Glob matching evaluation reports.
    #[arg(long)]
    pub reports: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value_t = fcbm_server::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, default_value_t = format!("http://127.0.0.1:{}", fcbm_server::DEFAULT_PORT))]
    pub url: String,
    #[command(subcommand)]
    pub endpoint: Endpoint,
}

#[derive(Debug, Subcommand)]
pub enum Endpoint {
    Meta,
    Samples {
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    Sample {
        id: String,
    },
    Predict {
        /// Comma-separated concept values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        concepts: Vec<f64>,
    },
    Curves {
        #[arg(long)]
        output: usize,
    },
    Metrics,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.code;
    }
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::new("threads", EXIT_USAGE, format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
