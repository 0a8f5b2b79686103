//! `trackeval`: evaluation, augmentation, synthesis, re-scoring, overlays and
//! external-tracker conformance checks.

mod commands;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::json;
use trackeval_core::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "trackeval", version, about = "Asynchronous tracking pipeline evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides `seed` from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override one config key, e.g. `--set schedule.tracker_hz=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=JSON")]
    pub overrides: Vec<String>,
    /// Sequences evaluated in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run a tracker under a protocol and score the result.
    Eval(EvalArgs),
    /// Add synthetic occlusions to a sequence.
    Augment(AugmentArgs),
    /// Render synthetic sequences with known camera motion.
    Synth(SynthArgs),
    /// Re-score an existing result trace.
    Metrics(MetricsArgs),
    /// Burn prediction and ground-truth boxes into the frames.
    Overlay(OverlayArgs),
    /// Check an external tracker against the wire protocol.
    Conformance(ConformanceArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Sequence manifests, or directories holding `manifest.json` or `*/manifest.json`.
    #[arg(required = true)]
    pub manifests: Vec<PathBuf>,
    /// `ncc`, `trace:<file or dir>` or `extern:<command | host:port>`.
    #[arg(long, default_value = "ncc")]
    pub tracker: String,
    /// `ltp`, `dsp`, `dsp:<n>` or `eop`.
    #[arg(long, default_value = "eop")]
    pub protocol: String,
    /// Ego-motion under EOP: `estimated`, or `scripted` to replay `true_homographies.ndjson`.
    #[arg(long, default_value = "estimated")]
    pub ego: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    pub manifest: PathBuf,
    /// JSON list of `{"start","end","shape"}` events.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// A scene spec (object or list of objects); omit to render the occluded suite.
    #[arg(long, conflicts_with = "suite")]
    pub spec: Option<PathBuf>,
    /// Number of occluded-suite sequences.
    #[arg(long)]
    pub suite: Option<usize>,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long, default_value_t = 150)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub manifest: PathBuf,
    /// Result trace NDJSON.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OverlayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConformanceArgs {
    /// `extern:<command | host:port>`.
    #[arg(long)]
    pub tracker: String,
    #[arg(long, default_value_t = 100)]
    pub exchanges: usize,
}

/// Error reported as `{"error":{"code","message"}}` on stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: u8,
}

impl CliError {
    pub fn usage(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), exit: 2 }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), exit: 1 }
    }
}

/// Wraps any library error with its stable code.
pub fn core_err<E: Into<trackeval_core::Error>>(e: E) -> CliError {
    let e: trackeval_core::Error = e.into();
    CliError::runtime(e.code(), e.to_string())
}

fn config_help() -> String {
    let mut s = String::from("Config keys (dotted path = default):\n");
    for (k, v) in RunConfig::documented_keys() {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s
}

fn command() -> clap::Command {
    let help = config_help();
    Cli::command().after_long_help(help.clone()).mut_subcommand("eval", |c| c.after_long_help(help))
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(CliError::usage("usage", e.render().to_string().trim().to_string()));
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return report(CliError::usage("usage", e.to_string())),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", json!({ "error": { "code": e.code, "message": e.message } }));
    ExitCode::from(e.exit)
}
