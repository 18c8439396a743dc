//! `natrob` command-line front end.
//!
//! Each subcommand loads a [`config::RunConfig`], writes its resolved form next to the outputs
//! and delegates to `natrob-core`. Failures are reported as one JSON object on stderr; the exit
//! code is 1 for validation errors and 2 for runtime or data errors.

pub mod commands;
pub mod config;
pub mod plots;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use natrob_core::Error;

use crate::config::{parse_override, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "natrob", version, about = "Natural-robustness evaluation of image classifiers")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set trainer.config.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Same as `--set output_dir=PATH`.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Same as `--set seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply one distortion to PNG/JPEG images.
    Distort(DistortArgs),
    /// Render a synthetic video dataset and its manifest.
    GenSynthetic,
    /// Train reference models on the manifest's training split.
    TrainRef,
    /// Predict anchors, natural neighbors and the distortion grid.
    Predict,
    /// Robustness tables, correlations and plots from prediction CSVs.
    Report(ReportArgs),
    /// L∞ distances between neighboring frames against an ε-ball.
    AdvAnalysis(AdvArgs),
}

#[derive(Debug, Args)]
pub struct DistortArgs {
    /// Input images. Repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub family: String,
    /// 0 (identity) through 5.
    #[arg(long)]
    pub severity: u8,
    /// Translation direction: +x, -x, +y or -y.
    #[arg(long)]
    pub direction: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Same as `--set report.predictions=[...]`. Repeatable.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdvArgs {
    /// Same as `--set analysis.predictions=PATH`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Same as `--set analysis.model_id=ID`.
    #[arg(long)]
    pub model_id: Option<String>,
}

/// A failed command: the error plus optional structured context for the JSON report.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub details: Option<serde_json::Value>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self { error, details: None }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_validation() {
            1
        } else {
            2
        }
    }

    pub fn to_json(&self) -> String {
        let mut obj = serde_json::json!({
            "code": self.error.code(),
            "message": self.error.to_string(),
            "exit_code": self.exit_code(),
        });
        if let Some(d) = &self.details {
            obj["details"] = d.clone();
        }
        serde_json::json!({ "error": obj }).to_string()
    }
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

impl Cli {
    /// `--set` overrides followed by the dedicated flags, in that order.
    pub fn overrides(&self) -> Result<Vec<(String, toml::Value)>, Error> {
        let mut out = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
        if let Some(d) = &self.output_dir {
            out.push(("output_dir".into(), path_value(d)));
        }
        if let Some(s) = self.seed {
            let s = i64::try_from(s).map_err(|_| Error::Config(format!("seed {s} exceeds the TOML integer range")))?;
            out.push(("seed".into(), toml::Value::Integer(s)));
        }
        match &self.command {
            Command::Report(a) if !a.predictions.is_empty() => {
                out.push(("report.predictions".into(), toml::Value::Array(a.predictions.iter().map(|p| path_value(p)).collect())));
            }
            Command::AdvAnalysis(a) => {
                if let Some(p) = &a.predictions {
                    out.push(("analysis.predictions".into(), path_value(p)));
                }
                if let Some(m) = &a.model_id {
                    out.push(("analysis.model_id".into(), toml::Value::String(m.clone())));
                }
            }
            _ => {}
        }
        Ok(out)
    }

    pub fn load_config(&self) -> Result<RunConfig, Error> {
        RunConfig::load(self.config.as_deref(), &self.overrides()?)
    }
}

/// Runs a parsed command line; the returned lines are printed to stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>, Failure> {
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Distort(a) => commands::distort(&cfg, a),
        Command::GenSynthetic => commands::gen_synthetic(&cfg),
        Command::TrainRef => commands::train_ref(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Report(_) => commands::report(&cfg),
        Command::AdvAnalysis(_) => commands::adv_analysis(&cfg),
    }
}

/// Parses `args`, runs the command and returns `(exit code, stdout, stderr)`.
pub fn main_with_args<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return (0, e.to_string(), String::new());
            }
            let err = serde_json::json!({ "error": { "code": "UsageError", "message": e.to_string().trim(), "exit_code": 1 } });
            return (1, String::new(), err.to_string());
        }
    };
    match run(&cli) {
        Ok(lines) => (0, lines.iter().map(|l| format!("{l}\n")).collect(), String::new()),
        Err(f) => (f.exit_code(), String::new(), f.to_json()),
    }
}
