//! The `censorbounds` command line: `simulate`, `fit`, `evaluate`, `audit`,
//! `gmsm` and `replay`.
//!
//! Every run writes `effective_config.json` into its output directory. The
//! file holds the fully resolved subcommand arguments (output directory
//! excluded), so `censorbounds replay <file> --out <dir>` reproduces the run
//! byte for byte.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 data error,
//! 4 internal error.

mod args;
mod commands;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use args::*;

use crate::analysis::AnalysisError;
use crate::bounds::BoundsError;
use crate::data::DataError;
use crate::models::persist::PersistError;
use crate::models::ModelError;
use crate::nuisance::NuisanceError;
use crate::sensitivity::SensitivityError;
use crate::simulation::SimulationError;

pub const THREADS_ENV: &str = "CENSORBOUNDS_THREADS";
pub const CONFIG_FILE: &str = "effective_config.json";
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Io(_) | PersistError::BadMagic | PersistError::UnsupportedVersion(_) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<NuisanceError> for CliError {
    fn from(e: NuisanceError) -> Self {
        match e {
            NuisanceError::TooFewSubjects { .. } | NuisanceError::EmptyCell { .. } | NuisanceError::DegenerateDose => {
                CliError::Data(e.to_string())
            }
            NuisanceError::Model(m) => m.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SensitivityError> for CliError {
    fn from(e: SensitivityError) -> Self {
        match e {
            SensitivityError::Csv(_) | SensitivityError::CellTooSmall(_) | SensitivityError::DegenerateSample => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        match e {
            BoundsError::Nuisance(n) => n.into(),
            BoundsError::Model(m) => m.into(),
            BoundsError::Sensitivity(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Data(d) => d.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Bounds(b) => b.into(),
            AnalysisError::Nuisance(n) => n.into(),
            AnalysisError::Simulation(s) => s.into(),
            AnalysisError::EmptySelection
            | AnalysisError::EmptySubgroup
            | AnalysisError::TooFewSubjects { .. }
            | AnalysisError::BoundsFile { .. } => CliError::Data(e.to_string()),
            AnalysisError::LengthMismatch { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "censorbounds",
    version,
    about = "Bounds on treatment effects from informatively censored survival data"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads (falls back to $CENSORBOUNDS_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of flag defaults; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// The replayable part of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: RunCommand,
}

/// Parses `argv` (including the program name), runs it and returns the
/// process exit code. Diagnostics go to stderr as one line.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config_overlay(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => {
                Some(v.trim().parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a count")))?)
            }
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Replay(r) => {
            let text = std::fs::read_to_string(&r.file).map_err(|e| CliError::io(&r.file, e))?;
            let cfg: EffectiveConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not a run configuration: {e}", r.file.display())))?;
            if cfg.schema_version != CONFIG_SCHEMA_VERSION {
                return Err(CliError::Usage(format!("unsupported configuration version {}", cfg.schema_version)));
            }
            run_command(cfg.command, &r.out)
        }
        other => {
            let (cmd, out) = other.into_parts()?;
            run_command(cmd, &out)
        }
    }
}

fn run_command(cmd: RunCommand, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let cfg = EffectiveConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.clone(),
    };
    commands::write_json(&out.join(CONFIG_FILE), &cfg)?;
    match &cmd {
        RunCommand::Simulate(a) => commands::simulate(a, out),
        RunCommand::Fit(a) => commands::fit(a, out),
        RunCommand::Evaluate(a) => commands::evaluate(a, out),
        RunCommand::Audit(a) => commands::audit(a, out),
        RunCommand::Gmsm(a) => commands::gmsm(a, out),
    }
}

/// Expands `--config file.json` into explicit flags placed right after the
/// subcommand name, so flags given on the command line override them.
fn apply_config_overlay(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let pos = argv.iter().position(|a| a == "--config" || a.to_string_lossy().starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path: PathBuf = match argv[pos].to_string_lossy().strip_prefix("--config=") {
        Some(p) => PathBuf::from(p),
        None => match argv.get(pos + 1) {
            Some(p) => PathBuf::from(p),
            None => return Err(CliError::Usage("--config needs a file".into())),
        },
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Usage(format!("{}: expected a JSON object of flags", path.display())));
    };
    let mut flags = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            serde_json::Value::Bool(true) => {
                flags.push(OsString::from(flag));
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            serde_json::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        flags.push(OsString::from(format!("{flag}={text}")));
    }
    let sub = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| CliError::Usage("no subcommand given".into()))?;
    let mut out: Vec<OsString> = argv[..=sub].to_vec();
    out.extend(flags);
    out.extend(argv[sub + 1..].iter().cloned());
    Ok(out)
}

const SUBCOMMANDS: [&str; 6] = ["simulate", "fit", "evaluate", "audit", "gmsm", "replay"];
