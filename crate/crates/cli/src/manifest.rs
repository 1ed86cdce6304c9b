use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    /// SHA-256 of the resolved configuration as compact JSON.
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub config: &'a RunConfig,
    pub artifacts: &'a [PathBuf],
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let bytes = serde_json::to_vec(cfg)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, cfg: &'a RunConfig, threads: usize, artifacts: &'a [PathBuf]) -> Result<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config_hash(cfg)?,
            seed: cfg.seed,
            threads,
            config: cfg,
            artifacts,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let f = std::fs::File::create(dir.join("manifest.json"))?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}
