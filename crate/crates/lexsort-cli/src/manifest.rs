//! Run manifests: one JSON file per successful run, recording everything
//! needed to re-execute it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lexsort_core::error::Error;
use serde::Serialize;

#[derive(Serialize)]
struct ManifestBody {
    command: String,
    argv: Vec<String>,
    version: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    artifacts: Vec<String>,
    duration_ms: u128,
}

/// Builder carried through a command; written by [`RunManifest::finalize`].
pub struct RunManifest {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    artifacts: Vec<PathBuf>,
    path: Option<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: serde_json::Value::Null,
            seeds: Vec::new(),
            artifacts: Vec::new(),
            path: None,
        }
    }

    pub fn config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }

    pub fn seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn artifact(mut self, path: impl AsRef<Path>) -> Self {
        self.artifacts.push(path.as_ref().to_path_buf());
        self
    }

    /// Explicit manifest destination; defaults to `<first artifact>.manifest.json`
    /// or `lexsort-<command>.manifest.json` when the run has no file artifact.
    pub fn manifest_path(mut self, path: Option<PathBuf>) -> Self {
        self.path = path;
        self
    }

    fn destination(&self) -> PathBuf {
        if let Some(path) = &self.path {
            return path.clone();
        }
        match self.artifacts.first() {
            Some(artifact) => {
                let mut name = artifact.as_os_str().to_os_string();
                name.push(".manifest.json");
                PathBuf::from(name)
            }
            None => PathBuf::from(format!(
                "lexsort-{}.manifest.json",
                self.command.replace(' ', "-")
            )),
        }
    }

    pub fn finalize(self, argv: &[String], started: Instant) -> Result<(), Error> {
        let destination = self.destination();
        let body = ManifestBody {
            command: self.command,
            argv: argv.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            artifacts: self
                .artifacts
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            duration_ms: started.elapsed().as_millis(),
        };
        let contents = serde_json::to_string_pretty(&body)?;
        std::fs::write(&destination, contents + "\n")
            .map_err(|e| Error::io(destination.display().to_string(), e))
    }
}
