use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Every option of the command, defaults filled in.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(cmd: &Command, seed: Option<u64>, inputs: Vec<PathBuf>, outputs: Vec<PathBuf>, secs: f64) -> Self {
        let tagged = serde_json::to_value(cmd).expect("commands serialize");
        let config = tagged
            .as_object()
            .and_then(|m| m.values().next().cloned())
            .unwrap_or(serde_json::Value::Null);
        RunManifest {
            tool: "mlrq".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: cmd.name().to_string(),
            config,
            seed,
            inputs,
            outputs,
            duration_secs: secs,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_command(&self) -> Result<Command, CliError> {
        let tagged = serde_json::json!({ &self.command: self.config });
        serde_json::from_value(tagged)
            .map_err(|e| CliError::Invalid(format!("manifest config for '{}': {e}", self.command)))
    }

    /// `<primary output>.manifest.json`.
    pub fn path_for(primary: &Path) -> PathBuf {
        let mut name: OsString = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
