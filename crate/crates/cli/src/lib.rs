//! Driver behind the `ledp` binary.
//!
//! Parameters come from an optional JSON config file whose keys mirror the
//! long flag names; flags override file values. Reports embed the resolved
//! configuration, the seed and the library version, and contain nothing
//! run-dependent, so equal inputs give byte-identical outputs at any worker
//! count.

pub mod args;
mod commands;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub use args::{Cli, Command, CommonArgs, Format};

/// Seed used when neither flag nor config supplies one.
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const WORKERS_ENV: &str = "LEDP_WORKERS";

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ledp_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ledp_core::Error as E;
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Core(
                E::InvalidEpsilon(_)
                | E::EpsilonTooSmall(..)
                | E::InvalidDelta(_)
                | E::InvalidProbability(_)
                | E::InvalidParameter { .. }
                | E::DimensionMismatch { .. }
                | E::GraphFormat { .. }
                | E::VertexOutOfRange { .. }
                | E::TooLarge { .. },
            ) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A finished command: the report in both formats plus the summary line.
pub struct Outcome {
    pub summary: String,
    pub json: String,
    pub csv: String,
    pub exit: u8,
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    config: &'a C,
    result: &'a R,
}

pub(crate) fn envelope<C: Serialize, R: Serialize>(
    subcommand: &str,
    seed: u64,
    config: &C,
    result: &R,
) -> Result<String, CliError> {
    let env = Envelope {
        tool: "ledp",
        version: ledp_core::VERSION,
        subcommand,
        seed,
        config,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| CliError::Failed(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Settings shared by every subcommand after merging.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub workers: Option<usize>,
}

type SplitConfig = (Map<String, Value>, Map<String, Value>);

fn load_config(path: Option<&Path>, subcommand: &str) -> Result<SplitConfig, CliError> {
    let Some(path) = path else {
        return Ok(Default::default());
    };
    let text = read_file(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(usage(format!("{}: expected a JSON object", path.display())));
    };
    if let Some(sub) = map.remove("subcommand") {
        if sub.as_str() != Some(subcommand) {
            return Err(usage(format!("config field `subcommand` is {sub}, but `{subcommand}` was invoked")));
        }
    }
    let mut common = Map::new();
    for key in ["seed", "output", "format", "workers"] {
        if let Some(v) = map.remove(key) {
            common.insert(key.to_string(), v);
        }
    }
    Ok((common, map))
}

/// Overlays the set flags onto the file values and deserializes the result.
pub(crate) fn merge<T: Serialize + DeserializeOwned>(file: Map<String, Value>, flags: &T) -> Result<T, CliError> {
    let mut merged = file;
    if let Value::Object(set) = serde_json::to_value(flags).map_err(|e| CliError::Failed(e.to_string()))? {
        merged.extend(set);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid config: {e}")))
}

fn resolve_common(file: Map<String, Value>, flags: &CommonArgs) -> Result<Resolved, CliError> {
    let merged: CommonArgs = merge(file, flags)?;
    let workers = match merged.workers {
        Some(w) => Some(w),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| usage(format!("{WORKERS_ENV}={v:?} is not a worker count")))?,
            ),
            Err(_) => None,
        },
    };
    if workers == Some(0) {
        return Err(usage("field `workers` must be at least 1"));
    }
    let format = merged.format.unwrap_or_else(|| match &merged.output {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => Format::Csv,
        _ => Format::Json,
    });
    Ok(Resolved {
        seed: merged.seed.unwrap_or(DEFAULT_SEED),
        output: merged.output,
        format,
        workers,
    })
}

/// Parses nothing; runs an already-parsed command line.
pub fn run(cli: &Cli) -> Result<(Resolved, Outcome), CliError> {
    let name = cli.command.name();
    let (common_file, params_file) = load_config(cli.common.config.as_deref(), name)?;
    let resolved = resolve_common(common_file, &cli.common)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = resolved.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Failed(e.to_string()))?;
    let outcome = pool.install(|| commands::execute(&cli.command, params_file, resolved.seed))?;
    Ok((resolved, outcome))
}

/// Writes the report and returns the text destined for standard output.
pub fn emit(resolved: &Resolved, outcome: &Outcome) -> Result<String, CliError> {
    let body = match resolved.format {
        Format::Json => &outcome.json,
        Format::Csv => &outcome.csv,
    };
    match &resolved.output {
        Some(path) => {
            fs::write(path, body).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(format!("{}\n", outcome.summary))
        }
        None => Ok(body.clone()),
    }
}
