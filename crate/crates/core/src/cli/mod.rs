//! Config-driven experiment commands behind the `embgeo` binary.

pub mod commands;
pub mod config;
pub mod verify;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use commands::{cmd_diagnose, cmd_ingest, cmd_train, CommandOutput};
pub use config::ExperimentConfig;
pub use verify::{cmd_verify, ItemStatus, VerifyBundle, VerifyItem};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_EMPTY_CORPUS: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_CORRUPT_CHECKPOINT: i32 = 5;
pub const EXIT_INDETERMINATE: i32 = 6;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_FAILURE, format!("invalid config: {}", message.into()))
    }

    pub fn missing(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(EXIT_MISSING_INPUT, format!("cannot read {}: {err}", path.display()))
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(EXIT_FAILURE, format!("cannot write {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Training { .. } => EXIT_TRAINING,
            Error::Indeterminate { .. } => EXIT_INDETERMINATE,
            _ => EXIT_FAILURE,
        };
        CliError::new(code, e.to_string())
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Serializes CSV records to memory first so the file appears atomically.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e))?;
    write_atomic(path, &bytes)
}

/// Stores the fully resolved config beside a command's outputs.
pub fn echo_config(cfg: &ExperimentConfig, command: &str) -> Result<PathBuf, CliError> {
    let path = cfg.output_dir.join(format!("{command}_config.json"));
    write_json(&path, cfg)?;
    Ok(path)
}
