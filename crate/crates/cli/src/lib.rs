//! Operator entry point for the uncertainty-aware agent: calibration, runs,
//! threshold sweeps, reports, uncertainty analysis and the oracle service.

pub mod commands;
pub mod config;
pub mod serve;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use uala_core::agent::{OracleMode, PromptMode};
use uala_core::calibration::ThresholdMethod;
use uala_core::eval::Dataset;
use uala_core::uncertainty::{Method, WeightScope};

use config::{DatasetConfig, Mode, RunConfig};

/// Exit status for a completed command.
pub const EXIT_OK: i32 = 0;
/// Exit status for a runtime failure (I/O, provider, fixture miss, empty calibration set).
pub const EXIT_RUNTIME: i32 = 1;
/// Exit status for bad flags or an inconsistent configuration.
pub const EXIT_USAGE: i32 = 2;

/// A configuration or flag problem; maps to [`EXIT_USAGE`].
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

#[derive(Debug, Parser)]
#[command(name = "uala", version, about = "Uncertainty-aware language agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a calibration set from the training split and write a threshold profile.
    Calibrate(CalibrateArgs),
    /// Run episodes over the evaluation split.
    Run(RunArgs),
    /// Evaluate a range of quantiles or calibration-set sizes.
    Sweep(SweepArgs),
    /// Aggregate trajectory logs into a report.
    Report(ReportArgs),
    /// Compare base-answer uncertainty of correct and incorrect answers.
    Analyze(AnalyzeArgs),
    /// Run episodes with a human oracle behind an HTTP API.
    Serve(ServeArgs),
    /// Normalise a raw dataset into the line-delimited item format.
    Dataset(DatasetArgs),
}

/// Settings shared by every command that runs the agent. Each flag overrides
/// the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Evaluation items (canonical .jsonl or a raw source file).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Training items for calibration.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dataset kind for --dataset and --train: hotpotqa, strategyqa or mmlu.
    #[arg(long)]
    pub kind: Option<Dataset>,
    /// Number of items to sample from the evaluation split.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub base_mode: Option<PromptMode>,
    #[arg(long)]
    pub estimator: Option<Method>,
    #[arg(long, value_parser = parse_scope)]
    pub weight_scope: Option<WeightScope>,
    /// max, mean, quantile or quantile:Q.
    #[arg(long)]
    pub threshold: Option<ThresholdMethod>,
    /// Calibration profile written by `calibrate`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub confidence_threshold: Option<f64>,
    /// Fall back to the base answer when the tool stage gives up.
    #[arg(long)]
    pub backoff: bool,
    /// off, simulated or interactive.
    #[arg(long)]
    pub oracle: Option<OracleMode>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u32>,
    /// Samples for self-consistency and multi-inference.
    #[arg(long)]
    pub samples: Option<u32>,
}

fn parse_scope(s: &str) -> Result<WeightScope, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown weight scope `{s}` (sequence, raw_prob)"))
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl Overrides {
    /// The config file (or defaults) with every given flag applied, validated.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        let split = |current: Option<DatasetConfig>, path: &Option<PathBuf>| -> anyhow::Result<Option<DatasetConfig>> {
            Ok(match (current, path) {
                (Some(mut d), Some(p)) => {
                    d.path = absolute(p);
                    if let Some(k) = self.kind {
                        d.kind = k;
                    }
                    Some(d)
                }
                (None, Some(p)) => {
                    let kind = self.kind.ok_or_else(|| UsageError("--kind is required with a dataset path".into()))?;
                    Some(DatasetConfig { kind, path: absolute(p), count: None, per_task: None })
                }
                (d, None) => d,
            })
        };
        cfg.dataset = split(cfg.dataset.take(), &self.dataset)?;
        cfg.train = split(cfg.train.take(), &self.train)?;
        if let Some(n) = self.count {
            let d = cfg.dataset.as_mut().ok_or_else(|| UsageError("--count needs a dataset".into()))?;
            d.count = Some(n);
        }
        if let Some(b) = self.base_mode {
            cfg.base_mode = Some(b);
        }
        if let Some(e) = self.estimator {
            cfg.estimator = e;
        }
        if let Some(s) = self.weight_scope {
            cfg.weight_scope = s;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(p) = &self.profile {
            cfg.profile = Some(absolute(p));
        }
        if let Some(c) = self.confidence_threshold {
            cfg.confidence_threshold = Some(c);
        }
        if self.backoff {
            cfg.backoff = true;
        }
        if let Some(o) = self.oracle {
            cfg.oracle = o;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.max_steps {
            cfg.max_steps = m;
        }
        if let Some(k) = self.samples {
            cfg.samples = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Profile output path; defaults to the configured profile path.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Calibration-set dump; defaults to `<profile>.set.json`.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Directory for trajectories.jsonl, report.json and report.txt.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Record every completion into a replay fixture at this path.
    #[arg(long)]
    pub record_completions: Option<PathBuf>,
    /// Record every tool response into a replay fixture at this path.
    #[arg(long)]
    pub record_tools: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Comma-separated ascending quantiles.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub qs: Vec<f64>,
    /// Comma-separated calibration-set sizes; switches to a size sweep.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Calibration-set dump from `calibrate`; otherwise the training split is calibrated first.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Write the rows as canonical JSON.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trajectory logs written by `run`.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Print the summary as canonical JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trajectory logs from uncertainty-gated runs.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Print canonical JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Built console assets to host at `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Directory for the run outputs.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Stop serving once every episode has finished.
    #[arg(long)]
    pub exit_when_done: bool,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub kind: Dataset,
    /// Raw source file (or MMLU directory).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub per_task: Option<usize>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Run(a) => commands::run(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Report(a) => commands::report(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Serve(a) => serve::serve(&a),
        Command::Dataset(a) => commands::dataset(&a),
    }
}
