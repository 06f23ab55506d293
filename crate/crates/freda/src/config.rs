//! Pipeline configuration: one TOML file, overridden by command-line flags.
//!
//! ```toml
//! corpus_path = "data/corpus.wexea"
//! schema_path = "data/schemas.json"
//! kb_pairs_dir = "data/kb"
//! event_log_path = "work/events.jsonl"
//! export_dir = "work/export"
//! split_ratio = 0.1
//! split_seed = 42
//! lease_minutes = 10
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SPLIT_RATIO: f64 = 0.1;
pub const DEFAULT_SPLIT_SEED: u64 = 0;
pub const DEFAULT_LEASE_MINUTES: u64 = 10;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub corpus_path: Option<PathBuf>,
    pub schema_path: Option<PathBuf>,
    pub kb_pairs_dir: Option<PathBuf>,
    pub event_log_path: Option<PathBuf>,
    pub export_dir: Option<PathBuf>,
    pub split_ratio: Option<f64>,
    pub split_seed: Option<u64>,
    pub lease_minutes: Option<u64>,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Config, CliError> {
        let mut c: Config =
            toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))?;
        for p in [
            &mut c.corpus_path,
            &mut c.schema_path,
            &mut c.kb_pairs_dir,
            &mut c.event_log_path,
            &mut c.export_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Config::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn split_ratio(&self) -> f64 {
        self.split_ratio.unwrap_or(DEFAULT_SPLIT_RATIO)
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(DEFAULT_SPLIT_SEED)
    }

    pub fn lease(&self) -> Duration {
        Duration::from_secs(60 * self.lease_minutes.unwrap_or(DEFAULT_LEASE_MINUTES))
    }
}

/// The flag value if given, else the config value, else an error naming
/// both.
pub fn require(flag: Option<PathBuf>, config: &Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::invalid(format!("missing `{key}`: pass the flag or set it in the config file")))
}
