//! The five pipeline stages. Each stage reads its predecessors' artifacts
//! from the run directory, writes its own, and extends the shared manifest,
//! so stages can run in separate processes.

pub mod build_datasets;
pub mod explain;
pub mod indicators;
pub mod report;
pub mod train;

use anyhow::Context;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gridshap::features::TableSchema;
use gridshap::seeds::stage_seed;

use crate::manifest::RunManifest;

/// Manifest and artifact bookkeeping common to every stage.
pub struct StageContext {
    pub out_dir: PathBuf,
    /// Effective global seed after any command-line override.
    pub seed: u64,
    name: &'static str,
    started: Instant,
    manifest: RunManifest,
    written: Vec<PathBuf>,
}

impl StageContext {
    pub fn begin(
        name: &'static str,
        out_dir: &Path,
        raw_config: &[u8],
        seed: u64,
    ) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating run directory {}", out_dir.display()))?;
        let mut manifest = RunManifest::load_or_new(out_dir)?;
        manifest.record_config(raw_config);
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            seed,
            name,
            started: Instant::now(),
            manifest,
            written: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.record_input(path)
    }

    /// Register a freshly written artifact for digesting at stage end.
    pub fn add_artifact(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    /// Create a stage subdirectory and return its path.
    pub fn subdir(&self, name: &str) -> anyhow::Result<PathBuf> {
        let dir = self.out_dir.join(name);
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        for path in &self.written {
            self.manifest.record_artifact(&self.out_dir, path)?;
        }
        self.manifest.record_timing(self.name, self.started.elapsed());
        self.manifest.save(&self.out_dir)
    }
}

/// Keep artifact file names shell- and filesystem-friendly.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn stability_model_id(area_id: &str, target: &str) -> String {
    format!("stability_{area_id}_{target}")
}

pub fn flow_model_id(link_id: &str) -> String {
    format!("flow_{link_id}")
}

/// The shuffled split is derived per model so train and explain agree on it
/// without sharing state.
pub fn split_seed(global_seed: u64, model_id: &str) -> u64 {
    stage_seed(global_seed, &format!("split:{model_id}"))
}

pub fn write_schema(path: &Path, schema: &TableSchema) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
