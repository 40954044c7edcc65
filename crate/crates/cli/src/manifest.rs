use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// argv as given, before config-file expansion.
    pub command_line: Vec<String>,
    /// Every flag after config-file expansion, defaults and derived values.
    pub resolved_config: serde_json::Value,
    pub root_seed: u64,
    pub version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// `running`, `completed` or `failed`.
    pub status: String,
    pub error: Option<String>,
    /// Headline results, when the command produces any.
    pub summary: Option<serde_json::Value>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, command_line: Vec<String>, resolved_config: serde_json::Value, root_seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            command_line,
            resolved_config,
            root_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: None,
            status: "running".into(),
            error: None,
            summary: None,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn finish(&mut self, outcome: &Result<(), CliError>) {
        self.finished_at = Some(now());
        match outcome {
            Ok(()) => self.status = "completed".into(),
            Err(e) => {
                self.status = "failed".into();
                self.error = Some(e.to_string());
            }
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
