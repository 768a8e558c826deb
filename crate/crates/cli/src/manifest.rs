//! Run manifest: digests of the config, every input file, and every artifact
//! a stage wrote, plus wall-clock timings. Reruns with identical config and
//! inputs must reproduce the digest maps bit for bit; timings are the one
//! field allowed to differ.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    /// Input path as resolved at load time, keyed to its content digest.
    pub input_digests: BTreeMap<String, String>,
    /// Artifact path relative to the run directory, keyed to its digest.
    pub artifacts: BTreeMap<String, String>,
    /// Per-stage wall time. Informational only; never compared across runs.
    pub timings_ms: BTreeMap<String, u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    /// Load the manifest from a run directory, or start a fresh one. Stages
    /// after the first extend the same file.
    pub fn load_or_new(out_dir: &Path) -> anyhow::Result<Self> {
        let path = out_dir.join(MANIFEST_FILE);
        if path.is_file() {
            let bytes = std::fs::read(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {}", path.display()))
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, json)
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn record_config(&mut self, raw: &[u8]) {
        self.config_digest = sha256_hex(raw);
    }

    pub fn record_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.input_digests
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Digest a freshly written artifact, keyed by its path under `out_dir`.
    pub fn record_artifact(&mut self, out_dir: &Path, path: &Path) -> anyhow::Result<()> {
        let rel = path.strip_prefix(out_dir).unwrap_or(path);
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        self.artifacts.insert(key, sha256_file(path)?);
        Ok(())
    }

    pub fn record_timing(&mut self, stage: &str, elapsed: std::time::Duration) {
        self.timings_ms
            .insert(stage.to_string(), elapsed.as_millis() as u64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        // SHA-256 of the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn artifacts_are_keyed_relative_to_the_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("models");
        std::fs::create_dir_all(&sub).unwrap();
        let artifact = sub.join("m.json");
        std::fs::write(&artifact, b"{}").unwrap();

        let mut manifest = RunManifest::default();
        manifest.record_artifact(dir.path(), &artifact).unwrap();
        assert!(manifest.artifacts.contains_key("models/m.json"));

        manifest.save(dir.path()).unwrap();
        let reloaded = RunManifest::load_or_new(dir.path()).unwrap();
        assert_eq!(reloaded.artifacts, manifest.artifacts);
    }

    #[test]
    fn timings_do_not_disturb_artifact_digests() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = dir.path().join("a.csv");
        std::fs::write(&artifact, b"x,y\n1,2\n").unwrap();

        let mut first = RunManifest::default();
        first.record_artifact(dir.path(), &artifact).unwrap();
        first.record_timing("stage", std::time::Duration::from_millis(5));

        let mut second = RunManifest::default();
        second.record_artifact(dir.path(), &artifact).unwrap();
        second.record_timing("stage", std::time::Duration::from_millis(900));

        assert_eq!(first.artifacts, second.artifacts);
        assert_ne!(first.timings_ms, second.timings_ms);
    }
}
