//! Provenance block embedded in every JSON result.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use swapsim_core::photonics::EngineKind;

#[derive(Clone, Debug, Serialize)]
pub struct ConfigRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ConfigRef,
    pub seed: u64,
    pub pulses: u64,
    pub workers: usize,
    pub engine: EngineKind,
    pub qnd: bool,
    pub version: &'static str,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// otherwise identical runs.
    pub unix_time: u64,
}

impl RunManifest {
    pub fn new(command: String, config: &Path, seed: u64, pulses: u64, workers: usize, engine: EngineKind, qnd: bool) -> Result<Self> {
        let bytes = std::fs::read(config).with_context(|| format!("reading {}", config.display()))?;
        Ok(RunManifest {
            command,
            config: ConfigRef {
                path: config.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
            seed,
            pulses,
            workers,
            engine,
            qnd,
            version: env!("CARGO_PKG_VERSION"),
            outputs: Vec::new(),
            unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        })
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

/// Writes `{ "manifest": ..., "result": ... }` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, manifest: &RunManifest, result: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Document { manifest, result })?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
