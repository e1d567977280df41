//! Run manifest: what a command was asked to do, what it read (with
//! digests), what it wrote, and how long it took. Written only after every
//! other output succeeded, so a failed run leaves no manifest behind.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_error, CliError};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub wall_time_seconds: f64,
}

/// Collects inputs/outputs during a command run and writes `manifest.json`
/// as the final step.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    seed: Option<u64>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Registers an input file and records its SHA-256.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    /// Writes an output file and registers it.
    pub fn write_output(&mut self, path: &Path, contents: &str) -> Result<(), CliError> {
        std::fs::write(path, contents).map_err(|e| io_error(path, e))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    /// Registers an output written by someone else.
    pub fn register_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `manifest.json` into `out_dir`. Call last.
    pub fn finish(self, out_dir: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            inputs: self.inputs,
            outputs: self.outputs,
            seed: self.seed,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = out_dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Validation(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, body).map_err(|e| io_error(&path, e))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
