//! Run manifests: content-addressed identity for every run so identical
//! configs provably produce identical artifacts.

use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub const ARTIFACT_VERSION: u32 = 1;

/// Index of one run's emitted files. `duration_secs` is recorded for
/// bookkeeping but deliberately excluded from `manifest_hash`, which must be
/// a pure function of the config and the produced bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    /// sha256 of the canonical config snapshot; embedded in every artifact.
    pub run_id: String,
    pub config: RunConfig,
    pub duration_secs: f64,
    /// File name -> sha256 of its bytes, for every emitted file.
    pub files: BTreeMap<String, String>,
    /// sha256 over run id and the sorted file hash entries.
    pub manifest_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(config: RunConfig) -> RunManifest {
        let run_id = sha256_hex(config.snapshot_json().as_bytes());
        RunManifest {
            artifact_version: ARTIFACT_VERSION,
            run_id,
            config,
            duration_secs: 0.0,
            files: BTreeMap::new(),
            manifest_hash: String::new(),
        }
    }

    pub fn record_file(&mut self, name: &str, bytes: &[u8]) {
        self.files.insert(name.to_string(), sha256_hex(bytes));
    }

    /// Seals the manifest: BTreeMap iteration is ordered, so the hash is
    /// stable across runs and platforms.
    pub fn finalize(&mut self, duration_secs: f64) {
        let mut h = Sha256::new();
        h.update(self.artifact_version.to_le_bytes());
        h.update(self.run_id.as_bytes());
        for (name, digest) in &self.files {
            h.update(name.as_bytes());
            h.update(digest.as_bytes());
        }
        self.manifest_hash = hex(&h.finalize());
        self.duration_secs = duration_secs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Model, RunConfig};

    #[test]
    fn hash_ignores_duration() {
        let cfg = RunConfig::defaults_for(Model::Multi);
        let mut a = RunManifest::new(cfg.clone());
        let mut b = RunManifest::new(cfg);
        a.record_file("x.csv", b"data");
        b.record_file("x.csv", b"data");
        a.finalize(1.0);
        b.finalize(99.0);
        assert_eq!(a.manifest_hash, b.manifest_hash);
    }

    #[test]
    fn hash_tracks_content_and_config() {
        let cfg = RunConfig::defaults_for(Model::Multi);
        let mut a = RunManifest::new(cfg.clone());
        let mut b = RunManifest::new(cfg.clone());
        a.record_file("x.csv", b"data");
        b.record_file("x.csv", b"datb");
        a.finalize(0.0);
        b.finalize(0.0);
        assert_ne!(a.manifest_hash, b.manifest_hash);

        let mut other = cfg;
        other.seed = 1;
        assert_ne!(RunManifest::new(other).run_id, a.run_id);
    }
}
