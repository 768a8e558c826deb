//! Stage 4: exact per-feature attributions for every trained model on its
//! explain split, then the derived views: normalized importances, dependency
//! tables for the top-ranked features, and the attribution-to-flow rank
//! correlation for link models.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use gridshap::analysis::{
    dependency_table, normalized_importance, shap_flow_correlation, write_dependency_csv,
    write_importance_csv, FlowCorrelation, ImportanceReport,
};
use gridshap::features::{ColumnSchema, TableSchema};
use gridshap::gbdt::{split_shuffled, SplitSpec, TreeEnsemble};
use gridshap::treeshap::{shap_batch, write_shap_csv, ShapResult};

use super::train::{load_model_rows, model_path, model_specs, ModelKind, ModelSpec};
use super::{sanitize, split_seed, StageContext};
use crate::config::{ExplainSplit, PipelineConfig};

pub fn shap_csv_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("explain").join(format!("{}.shap.csv", sanitize(model_id)))
}

pub fn importance_csv_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("explain").join(format!("{}.importance.csv", sanitize(model_id)))
}

pub fn importance_json_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("explain").join(format!("{}.importance.json", sanitize(model_id)))
}

pub fn flow_correlation_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("explain").join(format!("{}.flow_correlation.json", sanitize(model_id)))
}

/// Rank correlation of the integral attribution against the link flow
/// oriented out of the entry's area, once versus the measured flow and once
/// versus the model's own output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTauEntry {
    pub area_id: String,
    pub feature: String,
    pub versus_actual: FlowCorrelation,
    pub versus_predicted: FlowCorrelation,
}

fn shap_schema(model_id: &str, feature_names: &[String]) -> TableSchema {
    let mut columns = vec![ColumnSchema {
        name: "hour".into(),
        unit: "UTC".into(),
        provenance: "explained hour".into(),
        role: "index".into(),
    }];
    for name in feature_names {
        columns.push(ColumnSchema {
            name: format!("phi_{name}"),
            unit: "target units".into(),
            provenance: format!("attribution of {name}"),
            role: "attribution".into(),
        });
    }
    for (name, provenance) in [
        ("base_value", "expected model output over the training distribution"),
        ("prediction", "model output for the row"),
    ] {
        columns.push(ColumnSchema {
            name: name.into(),
            unit: "target units".into(),
            provenance: provenance.into(),
            role: "attribution".into(),
        });
    }
    TableSchema {
        table: format!("shap_{model_id}"),
        columns,
        excluded_hours: Default::default(),
    }
}

fn importance_schema(model_id: &str) -> TableSchema {
    let columns = [
        ("model_id", "", "model identifier", "label"),
        ("feature", "", "feature name", "label"),
        ("importance", "share", "mean absolute attribution, normalized to sum to one", "value"),
        ("rank", "", "1 is most important", "value"),
    ]
    .into_iter()
    .map(|(name, unit, provenance, role)| ColumnSchema {
        name: name.into(),
        unit: unit.into(),
        provenance: provenance.into(),
        role: role.into(),
    })
    .collect();
    TableSchema {
        table: format!("importance_{model_id}"),
        columns,
        excluded_hours: Default::default(),
    }
}

fn explain_one(
    config: &PipelineConfig,
    ctx: &mut StageContext,
    spec: &ModelSpec,
) -> anyhow::Result<()> {
    let model_file = model_path(&ctx.out_dir, &spec.model_id);
    if !model_file.is_file() {
        bail!("missing model {}; run the train stage first", model_file.display());
    }
    let model = TreeEnsemble::load(&model_file)?;
    let data = load_model_rows(&ctx.out_dir, spec)?;
    if model.feature_names != data.feature_names {
        bail!(
            "model {} was trained on different features than the current dataset",
            spec.model_id
        );
    }

    let split_spec = SplitSpec {
        seed: split_seed(ctx.seed, &spec.model_id),
        ..config.split.clone()
    };
    let idx = split_shuffled(data.rows.len(), &split_spec)?;
    let mut subset = match config.analysis.explain_split {
        ExplainSplit::Train => idx.train,
        ExplainSplit::Validation => idx.validation,
        ExplainSplit::Test => idx.test,
        ExplainSplit::All => (0..data.rows.len()).collect(),
    };
    subset.sort_unstable();

    let rows: Vec<Vec<f64>> = subset.iter().map(|&i| data.rows[i].clone()).collect();
    let hours: Vec<_> = subset.iter().map(|&i| data.hours[i]).collect();
    let targets: Vec<f64> = subset.iter().map(|&i| data.targets[i]).collect();
    let shap = shap_batch(&model, &rows)
        .with_context(|| format!("attributions for {}", spec.model_id))?;

    let csv = shap_csv_path(&ctx.out_dir, &spec.model_id);
    write_shap_csv(&csv, &hours, &data.feature_names, &shap)?;
    let schema_path = csv.with_extension("schema.json");
    super::write_schema(&schema_path, &shap_schema(&spec.model_id, &data.feature_names))?;
    ctx.add_artifact(csv);
    ctx.add_artifact(schema_path);

    let report = match normalized_importance(&spec.model_id, &data.feature_names, &shap) {
        Ok(report) => report,
        Err(gridshap::Error::AllZeroAttributions) => {
            log::warn!(
                "{}: model is constant, importances are undefined; skipping ranking outputs",
                spec.model_id
            );
            return Ok(());
        }
        Err(e) => return Err(e).context("normalizing importances"),
    };
    let importance_csv = importance_csv_path(&ctx.out_dir, &spec.model_id);
    write_importance_csv(&importance_csv, &[report.clone()])?;
    super::write_schema(
        &importance_csv.with_extension("schema.json"),
        &importance_schema(&spec.model_id),
    )?;
    let importance_json = importance_json_path(&ctx.out_dir, &spec.model_id);
    super::write_json(&importance_json, &report)?;
    ctx.add_artifact(importance_csv.with_extension("schema.json"));
    ctx.add_artifact(importance_csv);
    ctx.add_artifact(importance_json);

    write_dependency_tables(config, ctx, spec, &report, &rows, &shap, &data.feature_names)?;

    if matches!(spec.kind, ModelKind::Flow { .. }) {
        write_flow_correlations(config, ctx, spec, &model, &rows, &targets, &shap, &data.feature_names)?;
    }
    Ok(())
}

fn write_dependency_tables(
    config: &PipelineConfig,
    ctx: &mut StageContext,
    spec: &ModelSpec,
    report: &ImportanceReport,
    rows: &[Vec<f64>],
    shap: &[ShapResult],
    feature_names: &[String],
) -> anyhow::Result<()> {
    let top = report.top_k(config.analysis.top_k);
    for (position, entry) in top.iter().enumerate() {
        let f = feature_names
            .iter()
            .position(|n| n == &entry.feature)
            .expect("ranked feature exists");
        let feature_col: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        let shap_col: Vec<f64> = shap.iter().map(|s| s.phi[f]).collect();
        // Color by the most important other feature, the usual interaction view.
        let color_entry = if position == 0 { top.get(1) } else { top.first() };
        let color_col: Option<Vec<f64>> = color_entry.map(|c| {
            let cf = feature_names.iter().position(|n| n == &c.feature).unwrap();
            rows.iter().map(|r| r[cf]).collect()
        });
        let table = dependency_table(&feature_col, &shap_col, color_col.as_deref())?;
        let stem = format!("{}.dep_{}_{}", sanitize(&spec.model_id), entry.rank, sanitize(&entry.feature));
        let dir = ctx.out_dir.join("explain");
        let csv = dir.join(format!("{stem}.csv"));
        let header = dir.join(format!("{stem}.header.json"));
        write_dependency_csv(&csv, &header, &table)?;
        ctx.add_artifact(csv);
        ctx.add_artifact(header);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn write_flow_correlations(
    config: &PipelineConfig,
    ctx: &mut StageContext,
    spec: &ModelSpec,
    model: &TreeEnsemble,
    rows: &[Vec<f64>],
    targets: &[f64],
    shap: &[ShapResult],
    feature_names: &[String],
) -> anyhow::Result<()> {
    let ModelKind::Flow { link_id } = &spec.kind else {
        return Ok(());
    };
    let link = config
        .links
        .iter()
        .find(|l| &l.link_id == link_id)
        .expect("flow model spec comes from the configured link list");
    let predicted = model.predict(rows);
    let mut entries: Vec<FlowTauEntry> = Vec::new();
    for (f, name) in feature_names.iter().enumerate() {
        let Some(area_id) = name.strip_suffix("__integral") else {
            continue;
        };
        // The stored target is positive out of the from terminal. Re-orient
        // it out of the examined terminal: a positive tau then reads as
        // control-like for that area no matter which end it sits on.
        let orient = if area_id == link.from_area { 1.0 } else { -1.0 };
        let phi: Vec<f64> = shap.iter().map(|s| s.phi[f]).collect();
        let dead_zone = config.analysis.tau_dead_zone;
        let versus = |outflow: Vec<f64>| match shap_flow_correlation(&phi, &outflow, dead_zone) {
            Ok(c) => Ok(Some(c)),
            Err(gridshap::Error::ConstantTarget) => Ok(None),
            Err(e) => Err(e),
        };
        let oriented = |xs: &[f64]| xs.iter().map(|v| orient * v).collect::<Vec<f64>>();
        let (actual, predicted_tau) = (versus(oriented(targets))?, versus(oriented(&predicted))?);
        match (actual, predicted_tau) {
            (Some(versus_actual), Some(versus_predicted)) => entries.push(FlowTauEntry {
                area_id: area_id.to_string(),
                feature: name.clone(),
                versus_actual,
                versus_predicted,
            }),
            _ => log::warn!(
                "{}: attribution of {name} is constant; rank correlation undefined",
                spec.model_id
            ),
        }
    }
    if entries.is_empty() {
        log::info!("{}: no terminal integral feature to correlate", spec.model_id);
        return Ok(());
    }
    let path = flow_correlation_path(&ctx.out_dir, &spec.model_id);
    super::write_json(&path, &entries)?;
    ctx.add_artifact(path);
    Ok(())
}

pub fn run(config: &PipelineConfig, mut ctx: StageContext) -> anyhow::Result<()> {
    let specs = model_specs(config);
    if specs.is_empty() {
        bail!("config yields no models to explain");
    }
    ctx.subdir("explain")?;
    for spec in &specs {
        explain_one(config, &mut ctx, spec)?;
    }
    ctx.finish()
}
