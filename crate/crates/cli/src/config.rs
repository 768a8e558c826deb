//! Pipeline configuration. JSON on disk; relative input paths resolve
//! against `data_root` (default: the config file's directory), and the
//! `GRIDSHAP_DATA_ROOT` environment variable overrides `data_root`. Paths
//! are the only thing the environment may override.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use gridshap::features::SignConvention;
use gridshap::gbdt::{HyperParams, SplitSpec};
use gridshap::indicators::IndicatorParams;

pub const DATA_ROOT_ENV: &str = "GRIDSHAP_DATA_ROOT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyInput {
    pub area_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularInput {
    /// Quantity name, e.g. "load_actual". Shared across zones.
    pub name: String,
    pub zone_id: String,
    pub path: PathBuf,
    /// Declared sampling resolution; inferred from spacing when omitted.
    #[serde(default)]
    pub resolution_minutes: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastPair {
    pub day_ahead: String,
    pub actual: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub area_id: String,
    pub zones: Vec<String>,
    /// Zone-summed power quantities (loads, generation, wind/solar forecasts).
    #[serde(default)]
    pub power_series: Vec<String>,
    /// Zone-averaged intensive quantities (prices).
    #[serde(default)]
    pub price_series: Vec<String>,
    /// Quantities whose hourly ramp also becomes a feature.
    #[serde(default)]
    pub ramp_of: Vec<String>,
    #[serde(default)]
    pub forecast_pairs: Vec<ForecastPair>,
    /// Synchronous-generation weights for the inertia proxy; empty disables it.
    #[serde(default)]
    pub inertia_weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalMode {
    /// Feature both terminal areas.
    #[default]
    Both,
    /// Only the sending side is observable.
    FromOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub link_id: String,
    pub from_area: String,
    pub to_area: String,
    /// Tabular input names, oriented positive out of `from_area`.
    pub scheduled_series: String,
    pub physical_series: String,
    #[serde(default)]
    pub terminals: TerminalMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampEntryConfig {
    pub name: String,
    /// Tabular input name whose mean absolute hourly change supplies delta P.
    #[serde(default)]
    pub series: Option<String>,
    /// Explicit delta P, mutually exclusive with `series`.
    #[serde(default)]
    pub delta_p_mw: Option<f64>,
    pub ramp_rate_per_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainSplit {
    Train,
    Validation,
    #[default]
    Test,
    All,
}

fn default_top_k() -> usize {
    8
}

fn default_dead_zone() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_dead_zone")]
    pub tau_dead_zone: f64,
    #[serde(default)]
    pub explain_split: ExplainSplit,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            top_k: default_top_k(),
            tau_dead_zone: default_dead_zone(),
            explain_split: ExplainSplit::default(),
        }
    }
}

fn default_cv_folds() -> usize {
    5
}

fn default_exclusion_days() -> i64 {
    60
}

fn default_targets() -> Vec<String> {
    gridshap::features::INDICATOR_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub global_seed: u64,
    /// Base directory for relative input paths; default is the config dir.
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    pub frequency_inputs: Vec<FrequencyInput>,
    pub tabular_inputs: Vec<TabularInput>,
    pub areas: Vec<AreaConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    #[serde(default)]
    pub outage_path: Option<PathBuf>,
    /// Unavailability listings at least this long are reviewed, not excluded.
    #[serde(default = "default_exclusion_days")]
    pub exclusion_threshold_days: i64,
    #[serde(default)]
    pub sign_convention: SignConvention,
    #[serde(default)]
    pub indicator_params: IndicatorParams,
    #[serde(default)]
    pub split: SplitSpec,
    /// Base training configuration; grid points override parts of it.
    #[serde(default)]
    pub hyperparams: HyperParams,
    /// None selects the stock grid.
    #[serde(default)]
    pub grid: Option<Vec<GridPoint>>,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    /// Indicators to model per area; default is all four.
    #[serde(default = "default_targets")]
    pub stability_targets: Vec<String>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub ramp_entries: Vec<RampEntryConfig>,
}

impl PipelineConfig {
    /// Parse, resolve paths, and validate. Returns the raw file bytes too,
    /// which the run manifest digests.
    pub fn load(path: &Path) -> anyhow::Result<(Self, Vec<u8>)> {
        let raw = std::fs::read(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig = serde_json::from_slice(&raw)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let config_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        config.resolve_paths(&config_dir);
        config.validate()?;
        Ok((config, raw))
    }

    fn resolve_paths(&mut self, config_dir: &Path) {
        // Only an explicitly supplied root gets anchored at the config
        // directory; the config_dir fallback must not be joined onto itself,
        // which would double the path whenever --config is itself relative.
        let supplied = match std::env::var_os(DATA_ROOT_ENV) {
            Some(dir) => Some(PathBuf::from(dir)),
            None => self.data_root.clone(),
        };
        let root = match supplied {
            Some(dir) if dir.is_relative() => config_dir.join(dir),
            Some(dir) => dir,
            None => config_dir.to_path_buf(),
        };
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        };
        for input in &mut self.frequency_inputs {
            resolve(&mut input.path);
        }
        for input in &mut self.tabular_inputs {
            resolve(&mut input.path);
        }
        if let Some(p) = &mut self.outage_path {
            resolve(p);
        }
        self.data_root = Some(root);
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.areas.is_empty() {
            bail!("config declares no areas");
        }
        for input in &self.frequency_inputs {
            if !input.path.is_file() {
                bail!("frequency input for {} not found: {}", input.area_id, input.path.display());
            }
        }
        let mut tabular_keys = BTreeSet::new();
        for input in &self.tabular_inputs {
            if !input.path.is_file() {
                bail!(
                    "tabular input {}/{} not found: {}",
                    input.name,
                    input.zone_id,
                    input.path.display()
                );
            }
            if !tabular_keys.insert((input.name.clone(), input.zone_id.clone())) {
                bail!("duplicate tabular input {} for zone {}", input.name, input.zone_id);
            }
        }
        if let Some(p) = &self.outage_path {
            if !p.is_file() {
                bail!("outage calendar not found: {}", p.display());
            }
        }

        let area_ids: BTreeSet<&str> = self.areas.iter().map(|a| a.area_id.as_str()).collect();
        if area_ids.len() != self.areas.len() {
            bail!("duplicate area ids");
        }
        for input in &self.frequency_inputs {
            if !area_ids.contains(input.area_id.as_str()) {
                bail!("frequency input references undeclared area {}", input.area_id);
            }
        }
        for area in &self.areas {
            if area.zones.is_empty() {
                bail!("area {} declares no zones", area.area_id);
            }
            let series_in_zones = |name: &str| {
                self.tabular_inputs
                    .iter()
                    .any(|t| t.name == name && area.zones.contains(&t.zone_id))
            };
            for name in area.power_series.iter().chain(&area.price_series) {
                if !series_in_zones(name) {
                    bail!("area {}: no tabular input named {} in its zones", area.area_id, name);
                }
            }
            for name in &area.ramp_of {
                if !area.power_series.contains(name) && !area.price_series.contains(name) {
                    bail!("area {}: ramp_of {} is not an aggregated series", area.area_id, name);
                }
            }
            for pair in &area.forecast_pairs {
                for name in [&pair.day_ahead, &pair.actual] {
                    if !series_in_zones(name) {
                        bail!(
                            "area {}: forecast pair references unknown series {}",
                            area.area_id,
                            name
                        );
                    }
                }
            }
            for name in area.inertia_weights.keys() {
                if !series_in_zones(name) {
                    bail!(
                        "area {}: inertia weight for unknown series {}",
                        area.area_id,
                        name
                    );
                }
            }
        }

        let mut link_ids = BTreeSet::new();
        for link in &self.links {
            if !link_ids.insert(link.link_id.as_str()) {
                bail!("duplicate link id {}", link.link_id);
            }
            for area in [&link.from_area, &link.to_area] {
                if !area_ids.contains(area.as_str()) {
                    bail!("link {} references undeclared area {}", link.link_id, area);
                }
            }
            for name in [&link.scheduled_series, &link.physical_series] {
                let count = self.tabular_inputs.iter().filter(|t| &t.name == name).count();
                if count != 1 {
                    bail!(
                        "link {}: series {} must match exactly one tabular input, found {}",
                        link.link_id,
                        name,
                        count
                    );
                }
            }
        }

        for target in &self.stability_targets {
            if !gridshap::features::INDICATOR_NAMES.contains(&target.as_str()) {
                bail!("unknown stability target {target}");
            }
        }
        if self.cv_folds < 2 {
            bail!("cv_folds must be at least 2");
        }
        if self.exclusion_threshold_days <= 0 {
            bail!("exclusion_threshold_days must be positive");
        }
        for entry in &self.ramp_entries {
            match (&entry.series, entry.delta_p_mw) {
                (Some(_), Some(_)) => {
                    bail!("ramp entry {}: give series or delta_p_mw, not both", entry.name)
                }
                (None, None) => {
                    bail!("ramp entry {}: needs a series or an explicit delta_p_mw", entry.name)
                }
                (Some(name), None) => {
                    if !self.tabular_inputs.iter().any(|t| &t.name == name) {
                        bail!("ramp entry {}: unknown series {}", entry.name, name);
                    }
                }
                (None, Some(_)) => {}
            }
        }
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                bail!("explicit hyperparameter grid is empty");
            }
        }
        Ok(())
    }

    /// Expand the configured grid over the base hyperparameters.
    pub fn hyperparameter_grid(&self) -> Vec<HyperParams> {
        match &self.grid {
            Some(points) => points
                .iter()
                .map(|p| HyperParams {
                    learning_rate: p.learning_rate,
                    max_leaves: p.max_leaves,
                    min_samples_leaf: p.min_samples_leaf,
                    ..self.hyperparams.clone()
                })
                .collect(),
            None => gridshap::gbdt::default_grid(&self.hyperparams),
        }
    }

    pub fn area(&self, area_id: &str) -> Option<&AreaConfig> {
        self.areas.iter().find(|a| a.area_id == area_id)
    }

    pub fn has_frequency(&self, area_id: &str) -> bool {
        self.frequency_inputs.iter().any(|f| f.area_id == area_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn minimal_config_json() -> serde_json::Value {
        serde_json::json!({
            "global_seed": 1,
            "frequency_inputs": [{"area_id": "alpha", "path": "freq.csv"}],
            "tabular_inputs": [
                {"name": "load_actual", "zone_id": "z1", "path": "load.csv"}
            ],
            "areas": [{"area_id": "alpha", "zones": ["z1"], "power_series": ["load_actual"]}]
        })
    }

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn paths_resolve_against_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "freq.csv", "timestamp,frequency_hz\n");
        write_file(dir.path(), "load.csv", "timestamp,value\n");
        let config_path = write_file(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );
        let (config, _) = PipelineConfig::load(&config_path).unwrap();
        assert_eq!(config.frequency_inputs[0].path, dir.path().join("freq.csv"));
        assert_eq!(config.cv_folds, 5);
        assert_eq!(config.analysis.top_k, 8);
        assert_eq!(config.stability_targets.len(), 4);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let mut json = minimal_config_json();
        json["cv_fold"] = serde_json::json!(3);
        let err = serde_json::from_value::<PipelineConfig>(json).unwrap_err();
        assert!(err.to_string().contains("cv_fold"), "{err}");
    }

    #[test]
    fn relative_config_directory_is_not_joined_onto_itself() {
        let mut config: PipelineConfig =
            serde_json::from_value(minimal_config_json()).unwrap();
        config.resolve_paths(Path::new("data"));
        assert_eq!(config.frequency_inputs[0].path, Path::new("data/freq.csv"));
        assert_eq!(config.data_root.as_deref(), Some(Path::new("data")));
    }

    #[test]
    fn missing_input_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "load.csv", "timestamp,value\n");
        let config_path = write_file(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );
        let err = PipelineConfig::load(&config_path).unwrap_err();
        assert!(err.to_string().contains("freq.csv"));
    }

    #[test]
    fn unknown_series_reference_fails() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "freq.csv", "x\n");
        write_file(dir.path(), "load.csv", "x\n");
        let mut json = minimal_config_json();
        json["areas"][0]["power_series"] = serde_json::json!(["load_actual", "ghost"]);
        let config_path = write_file(dir.path(), "config.json", &json.to_string());
        let err = PipelineConfig::load(&config_path).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn stock_grid_expands_from_base() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "freq.csv", "x\n");
        write_file(dir.path(), "load.csv", "x\n");
        let config_path = write_file(
            dir.path(),
            "config.json",
            &minimal_config_json().to_string(),
        );
        let (config, _) = PipelineConfig::load(&config_path).unwrap();
        assert_eq!(config.hyperparameter_grid().len(), 12);

        let mut with_grid = config.clone();
        with_grid.grid = Some(vec![GridPoint {
            learning_rate: 0.2,
            max_leaves: 7,
            min_samples_leaf: 3,
        }]);
        let grid = with_grid.hyperparameter_grid();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].max_leaves, 7);
        assert_eq!(grid[0].number_of_rounds, with_grid.hyperparams.number_of_rounds);
    }
}
