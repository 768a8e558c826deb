//! Stage 5: one consolidated bundle per run. Collects every model's test
//! metrics and benchmark factors, merges the importance rankings, copies the
//! flow correlations, and computes the ramp-speed table.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use gridshap::analysis::{
    mean_absolute_hourly_change, ramp_speed, write_importance_csv, write_ramp_csv,
    BenchmarkComparison, ImportanceReport, RampSpeedTable,
};
use gridshap::features::{ColumnSchema, TableSchema};
use gridshap::gbdt::HyperParams;
use gridshap::ingest::{parse_tabular_csv, resample_hourly};

use super::explain::{flow_correlation_path, importance_json_path, FlowTauEntry};
use super::train::{model_specs, report_path, TrainReport};
use super::StageContext;
use crate::config::PipelineConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub target_name: String,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub best_params: HyperParams,
    pub best_round: usize,
    pub test_mse: f64,
    pub test_r2: Option<f64>,
    pub baseline_r2: Option<f64>,
    pub benchmark: Option<BenchmarkComparison>,
}

impl From<TrainReport> for ModelSummary {
    fn from(r: TrainReport) -> Self {
        Self {
            model_id: r.model_id,
            target_name: r.target_name,
            n_rows: r.n_rows,
            n_train: r.n_train,
            n_validation: r.n_validation,
            n_test: r.n_test,
            best_params: r.best_params,
            best_round: r.best_round,
            test_mse: r.test_mse,
            test_r2: r.test_r2,
            baseline_r2: r.baseline_r2,
            benchmark: r.benchmark,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub models: Vec<ModelSummary>,
    /// Per-model importance rankings; constant models are absent.
    pub importances: BTreeMap<String, ImportanceReport>,
    pub flow_correlations: BTreeMap<String, Vec<FlowTauEntry>>,
    pub ramp_speeds: Option<RampSpeedTable>,
}

fn simple_schema(table: &str, columns: &[(&str, &str, &str)]) -> TableSchema {
    TableSchema {
        table: table.into(),
        columns: columns
            .iter()
            .map(|&(name, unit, provenance)| ColumnSchema {
                name: name.into(),
                unit: unit.into(),
                provenance: provenance.into(),
                role: "value".into(),
            })
            .collect(),
        excluded_hours: Default::default(),
    }
}

fn write_r2_csv(path: &Path, models: &[ModelSummary]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    writer.write_record(["model_id", "test_r2", "baseline_r2", "factor", "difference"])?;
    for m in models {
        writer.write_record([
            m.model_id.clone(),
            fmt(m.test_r2),
            fmt(m.baseline_r2),
            fmt(m.benchmark.as_ref().and_then(|b| b.factor)),
            fmt(m.benchmark.as_ref().map(|b| b.difference)),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn ramp_table(config: &PipelineConfig, ctx: &mut StageContext) -> anyhow::Result<Option<RampSpeedTable>> {
    if config.ramp_entries.is_empty() {
        return Ok(None);
    }
    let mut triples: Vec<(String, f64, f64)> = Vec::new();
    for entry in &config.ramp_entries {
        let delta_p = match (&entry.series, entry.delta_p_mw) {
            (None, Some(v)) => v,
            (Some(name), None) => {
                let input = config
                    .tabular_inputs
                    .iter()
                    .find(|t| &t.name == name)
                    .expect("validated at load");
                ctx.record_input(&input.path)?;
                let series = parse_tabular_csv(
                    &input.path,
                    &input.name,
                    &input.zone_id,
                    input.resolution_minutes,
                )?;
                let hourly = resample_hourly(&series);
                let values: Vec<f64> = hourly.rows.iter().map(|&(_, v)| v).collect();
                mean_absolute_hourly_change(&values)
                    .with_context(|| format!("delta P of {name} for ramp entry {}", entry.name))?
            }
            _ => unreachable!("validated at load"),
        };
        triples.push((entry.name.clone(), delta_p, entry.ramp_rate_per_min));
    }
    Ok(Some(ramp_speed(&triples)?))
}

pub fn run(config: &PipelineConfig, mut ctx: StageContext) -> anyhow::Result<()> {
    let specs = model_specs(config);
    if specs.is_empty() {
        bail!("config yields no models to report on");
    }
    let dir = ctx.subdir("report")?;

    let mut models: Vec<ModelSummary> = Vec::new();
    let mut importances: BTreeMap<String, ImportanceReport> = BTreeMap::new();
    let mut flow_correlations: BTreeMap<String, Vec<FlowTauEntry>> = BTreeMap::new();
    for spec in &specs {
        let report_file = report_path(&ctx.out_dir, &spec.model_id);
        if !report_file.is_file() {
            bail!(
                "run directory has no training report for {}; run the train stage first",
                spec.model_id
            );
        }
        let report: TrainReport = super::read_json(&report_file)?;
        models.push(report.into());

        let importance_file = importance_json_path(&ctx.out_dir, &spec.model_id);
        if importance_file.is_file() {
            importances.insert(spec.model_id.clone(), super::read_json(&importance_file)?);
        }
        let tau_file = flow_correlation_path(&ctx.out_dir, &spec.model_id);
        if tau_file.is_file() {
            flow_correlations.insert(spec.model_id.clone(), super::read_json(&tau_file)?);
        }
    }
    if importances.is_empty() && flow_correlations.is_empty() {
        log::warn!("no attribution artifacts found; did the explain stage run?");
    }

    let r2_csv = dir.join("r2.csv");
    write_r2_csv(&r2_csv, &models)?;
    super::write_schema(
        &r2_csv.with_extension("schema.json"),
        &simple_schema(
            "r2_comparison",
            &[
                ("model_id", "", "model identifier"),
                ("test_r2", "", "model R^2 on the held-out test split"),
                ("baseline_r2", "", "daily-profile predictor R^2 on the same split"),
                ("factor", "", "model R^2 over baseline R^2; empty when baseline <= 0"),
                ("difference", "", "model R^2 minus baseline R^2"),
            ],
        ),
    )?;
    ctx.add_artifact(r2_csv.with_extension("schema.json"));
    ctx.add_artifact(r2_csv);

    if !importances.is_empty() {
        let merged: Vec<ImportanceReport> = importances.values().cloned().collect();
        let importance_csv = dir.join("importance.csv");
        write_importance_csv(&importance_csv, &merged)?;
        super::write_schema(
            &importance_csv.with_extension("schema.json"),
            &simple_schema(
                "importance_all_models",
                &[
                    ("model_id", "", "model identifier"),
                    ("feature", "", "feature name"),
                    ("importance", "share", "normalized mean absolute attribution"),
                    ("rank", "", "1 is most important"),
                ],
            ),
        )?;
        ctx.add_artifact(importance_csv.with_extension("schema.json"));
        ctx.add_artifact(importance_csv);
    }

    let ramp_speeds = ramp_table(config, &mut ctx)?;
    if let Some(table) = &ramp_speeds {
        let ramp_csv = dir.join("ramp_speeds.csv");
        write_ramp_csv(&ramp_csv, table)?;
        super::write_schema(
            &ramp_csv.with_extension("schema.json"),
            &simple_schema(
                "ramp_speeds",
                &[
                    ("name", "", "asset name"),
                    ("delta_p_mw", "MW", "mean absolute hourly power change"),
                    ("ramp_rate_per_min", "1/min", "share of full load per minute"),
                    ("rocop_mw_per_min", "MW/min", "delta P times ramp rate"),
                    ("s", "", "RoCoP relative to the fastest entry"),
                ],
            ),
        )?;
        ctx.add_artifact(ramp_csv.with_extension("schema.json"));
        ctx.add_artifact(ramp_csv);
    }

    let bundle = ReportBundle { models, importances, flow_correlations, ramp_speeds };
    let bundle_path = dir.join("bundle.json");
    super::write_json(&bundle_path, &bundle)?;
    ctx.add_artifact(bundle_path);
    ctx.finish()
}
