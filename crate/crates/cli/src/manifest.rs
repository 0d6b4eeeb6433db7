use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Timestamps {
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<InputDigest>,
    /// Only recorded with `--record-time`, so that reruns stay byte-identical.
    pub timestamps: Option<Timestamps>,
    pub config: Config,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub struct ManifestBuilder {
    command: String,
    inputs: Vec<InputDigest>,
    started: Option<u64>,
}

impl ManifestBuilder {
    pub fn new(command: &str, record_time: bool) -> Self {
        Self { command: command.to_string(), inputs: Vec::new(), started: record_time.then(now_unix) }
    }

    /// Records the digest of an input file under its file name.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.inputs.push(InputDigest { name, sha256: sha256_hex(&bytes) });
        Ok(())
    }

    pub fn write(self, out: &Path, cfg: &Config) -> Result<()> {
        let config_json = serde_json::to_string(cfg)?;
        let manifest = RunManifest {
            command: self.command,
            config_hash: sha256_hex(config_json.as_bytes()),
            seed: cfg.seed(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: self.inputs,
            timestamps: self.started.map(|s| Timestamps { started_unix_s: s, finished_unix_s: now_unix() }),
            config: cfg.clone(),
        };
        crate::output::write_json(&out.join(MANIFEST_FILE), &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
