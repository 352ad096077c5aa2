//! Run manifest: the effective config plus everything needed to trace and
//! reload the artifacts of a run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textcf::ingest::bundle::BUNDLE_FILE;
use textcf::tensor::checkpoint::{FORMAT_VERSION, MAGIC};
use textcf::trainer::{TrainConfig, BEST_CHECKPOINT, CONFIG_FILE, LAST_CHECKPOINT, REPORT_FILE};
use textcf::Result;

pub const RUN_MANIFEST_FILE: &str = "run.json";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn checkpoint_format() -> String {
    format!("{} v{FORMAT_VERSION}", String::from_utf8_lossy(MAGIC))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub config: String,
    pub report: String,
    pub best_checkpoint: String,
    pub last_checkpoint: String,
}

impl Default for Artifacts {
    fn default() -> Self {
        Artifacts {
            config: CONFIG_FILE.into(),
            report: REPORT_FILE.into(),
            best_checkpoint: BEST_CHECKPOINT.into(),
            last_checkpoint: LAST_CHECKPOINT.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub checkpoint_format: String,
    pub config: TrainConfig,
    pub seed: u64,
    /// Bundle directory as given on the command line, made absolute.
    pub data: PathBuf,
    /// SHA-256 of the bundle's binary file.
    pub data_sha256: String,
    pub embeddings: Option<PathBuf>,
    pub resumed_from: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub artifacts: Artifacts,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(RUN_MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(RUN_MANIFEST_FILE))?)?)
    }
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn bundle_hash(dir: &Path) -> Result<String> {
    let bytes = fs::read(dir.join(BUNDLE_FILE))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_hex_sha256() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(BUNDLE_FILE), b"abc").unwrap();
        assert_eq!(
            bundle_hash(dir.path()).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            tool_version: TOOL_VERSION.into(),
            checkpoint_format: checkpoint_format(),
            config: TrainConfig::default(),
            seed: 3,
            data: "/data".into(),
            data_sha256: "00".into(),
            embeddings: None,
            resumed_from: None,
            threads: Some(1),
            started: 1,
            finished: 2,
            artifacts: Artifacts::default(),
        };
        m.save(dir.path()).unwrap();
        assert_eq!(RunManifest::load(dir.path()).unwrap(), m);
        assert_eq!(checkpoint_format(), "CRK1 v1");
    }
}
