//! Per-run provenance record written next to every set of results.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    /// Fully resolved configuration in the key-value syntax.
    pub resolved_config: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub started_unix_s: u64,
    /// Filled in once the run has finished.
    pub wall_clock_s: Option<f64>,
    pub status: String,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Owns the manifest of one output directory.
pub struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestWriter {
    /// Creates `out_dir` and writes the initial manifest before any result.
    pub fn start(
        out_dir: &Path,
        resolved_config: Option<String>,
        inputs: &[&Path],
        outputs: &[&str],
    ) -> io::Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest { path: p.display().to_string(), sha256: sha256_file(p)? })
            })
            .collect::<io::Result<Vec<_>>>()?;
        fs::create_dir_all(out_dir)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            resolved_config,
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_s: None,
            status: "running".into(),
        };
        let writer = ManifestWriter { path: out_dir.join(MANIFEST_NAME), manifest, clock: Instant::now() };
        writer.write()?;
        Ok(writer)
    }

    fn write(&self) -> io::Result<()> {
        let json = serde_json::to_string_pretty(&self.manifest).map_err(io::Error::other)?;
        fs::write(&self.path, json + "\n")
    }

    pub fn finish(mut self, status: &str) -> io::Result<()> {
        self.manifest.wall_clock_s = Some(self.clock.elapsed().as_secs_f64());
        self.manifest.status = status.to_string();
        self.write()
    }
}
