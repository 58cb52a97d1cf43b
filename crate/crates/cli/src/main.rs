//! `flowlens`: one binary for the whole pipeline. `synth` writes a labeled
//! capture and a user event log, `ingest` turns pcaps into stream JSONL,
//! `train`/`eval` fit and score the classifiers, `profile` aggregates
//! per-user histories into trait posteriors, and `gradcheck` verifies the
//! network's gradients against finite differences.
//!
//! Exit codes: 0 success, 64 usage errors, 2 unreadable or malformed data,
//! 70 internal invariant violations.

mod commands;
mod config;

use std::fmt;
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 70;

#[derive(Debug)]
pub enum CliError {
    /// Missing, unreadable, or malformed input.
    Data(String),
    /// The toolkit broke its own contract; inputs are not at fault.
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<flowlens_core::capture::CaptureError> for CliError {
    fn from(e: flowlens_core::capture::CaptureError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<flowlens_core::synth::SynthError> for CliError {
    fn from(e: flowlens_core::synth::SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<flowlens_core::models::ModelError> for CliError {
    fn from(e: flowlens_core::models::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<flowlens_core::profiler::ProfilerError> for CliError {
    fn from(e: flowlens_core::profiler::ProfilerError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Lstm,
    Forest,
    Svm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Forest => "forest",
            ModelKind::Svm => "svm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileMode {
    Train,
    Predict,
}

#[derive(Parser, Debug)]
#[command(name = "flowlens", version, about = "Encrypted traffic classification and user profiling pipeline")]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for this command.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic capture plus user event histories.
    Synth {
        /// Multiplier on the per-class stream counts.
        #[arg(long)]
        scale: Option<f64>,
        /// Synthetic population size; 0 skips user generation.
        #[arg(long)]
        users: Option<usize>,
        /// Labeled events per generated user.
        #[arg(long)]
        events_per_user: Option<usize>,
    },
    /// Reassemble pcaps into labeled stream JSONL plus an ingest report.
    Ingest {
        /// Classic pcap files to read.
        #[arg(required = true)]
        pcaps: Vec<PathBuf>,
        /// Device address; packets from it count as outgoing.
        #[arg(long)]
        device: Option<Ipv4Addr>,
        /// Label sidecar JSONL to join onto the streams by flow key.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Fit a model on the training side of the seeded split.
    Train {
        #[arg(long, value_enum, default_value = "lstm")]
        model: ModelKind,
        /// Stream JSONL; defaults to <data_dir>/streams.jsonl.
        #[arg(long)]
        streams: Option<PathBuf>,
        /// Label sidecar applied before training.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Training batches; 0 writes an initialized-only bundle.
        #[arg(long)]
        batches: Option<usize>,
    },
    /// Score a saved bundle on the held-out side of the seeded split.
    Eval {
        #[arg(long, value_enum, default_value = "lstm")]
        model: ModelKind,
        /// Stream JSONL; defaults to <data_dir>/streams.jsonl.
        #[arg(long)]
        streams: Option<PathBuf>,
        /// Label sidecar applied before scoring.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Bundle directory; defaults to <model_dir>.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Train trait models from event histories, or predict with them.
    Profile {
        #[arg(long, value_enum)]
        mode: ProfileMode,
        /// Event JSONL; defaults to <data_dir>/events.jsonl.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Ground-truth traits JSON (train mode); defaults to
        /// <data_dir>/traits.json.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Trait model JSON (predict mode); defaults to
        /// <model_dir>/trait_models.json.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        /// Random (shape, sequence) instances to verify.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Maximum tolerated relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Corrupt one gradient entry first, as a negative control.
        #[arg(long, hide = true)]
        sabotage: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&text).map_err(|e| CliError::Data(e.to_string()))?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    // --out points every command's writes at one directory.
    if cli.out.is_some() {
        cfg.data_dir = cfg.out_dir.clone();
        cfg.model_dir = cfg.out_dir.clone();
    }
    match cli.command {
        Command::Synth { scale, users, events_per_user } => {
            if let Some(s) = scale {
                cfg.scale = s;
            }
            if let Some(u) = users {
                cfg.users = u;
            }
            if let Some(e) = events_per_user {
                cfg.events_per_user = e;
            }
            commands::synth::run(&cfg)
        }
        Command::Ingest { pcaps, device, labels } => {
            commands::ingest::run(&cfg, &pcaps, device, labels.as_deref())
        }
        Command::Train { model, streams, labels, batches } => {
            if let Some(b) = batches {
                cfg.n_batches = b;
            }
            commands::train::run(&cfg, model, streams.as_deref(), labels.as_deref())
        }
        Command::Eval { model, streams, labels, bundle } => {
            commands::eval::run(&cfg, model, streams.as_deref(), labels.as_deref(), bundle.as_deref())
        }
        Command::Profile { mode, events, truth, models } => {
            commands::profile::run(&cfg, mode, events.as_deref(), truth.as_deref(), models.as_deref())
        }
        Command::Gradcheck { instances, eps, tol, sabotage } => {
            commands::gradcheck::run(&cfg, instances, eps, tol, sabotage)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
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
