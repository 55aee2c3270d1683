use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub code_version: String,
    pub threads: usize,
    pub started: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            started: Utc::now(),
            finished: None,
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        p
    }

    /// Stamp the end time and write `manifest.json` into `dir` with absolute
    /// artifact paths. Fails if a listed artifact is missing.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        if let Some(p) = self.outputs.iter().find(|p| !p.exists()) {
            return Err(CliError::Runtime(anyhow::anyhow!("artifact {} was not written", p.display())));
        }
        for p in &mut self.outputs {
            *p = std::fs::canonicalize(&*p)?;
        }
        self.finished = Some(Utc::now());
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Runtime(e.into()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
