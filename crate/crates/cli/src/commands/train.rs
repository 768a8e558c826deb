//! Stage 3: one boosted-tree regressor per stability target per observed
//! area, plus one per HVDC link. Each model gets a shuffled 64/16/20 split,
//! a cross-validated grid search on the training portion, and an
//! early-stopped final fit, then lands under `models/` with a training
//! report beside it.

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use gridshap::analysis::{benchmark_comparison, BenchmarkComparison};
use gridshap::features::{read_flow_dataset, read_stability_dataset};
use gridshap::gbdt::{
    fit, fit_daily_profile, grid_search_cv, mse, r2_score, split_shuffled, CvTable, Dataset,
    HyperParams, SplitSpec,
};
use gridshap::seeds::stage_seed;

use super::{build_datasets, flow_model_id, sanitize, split_seed, stability_model_id, StageContext};
use crate::config::PipelineConfig;

pub fn model_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("models").join(format!("{}.json", sanitize(model_id)))
}

pub fn report_path(out_dir: &Path, model_id: &str) -> PathBuf {
    out_dir.join("models").join(format!("{}.report.json", sanitize(model_id)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Stability { area_id: String, target: String },
    Flow { link_id: String },
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub model_id: String,
    pub kind: ModelKind,
}

/// Every model the configuration calls for, in a fixed order: stability
/// models by area then target, flow models by link.
pub fn model_specs(config: &PipelineConfig) -> Vec<ModelSpec> {
    let mut specs = Vec::new();
    for input in &config.frequency_inputs {
        for target in &config.stability_targets {
            specs.push(ModelSpec {
                model_id: stability_model_id(&input.area_id, target),
                kind: ModelKind::Stability {
                    area_id: input.area_id.clone(),
                    target: target.clone(),
                },
            });
        }
    }
    for link in &config.links {
        specs.push(ModelSpec {
            model_id: flow_model_id(&link.link_id),
            kind: ModelKind::Flow { link_id: link.link_id.clone() },
        });
    }
    specs
}

/// A model's learning problem, loaded back from the stage-2 artifacts.
pub struct ModelRows {
    pub feature_names: Vec<String>,
    pub hours: Vec<DateTime<Utc>>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub target_name: String,
}

pub fn load_model_rows(out_dir: &Path, spec: &ModelSpec) -> anyhow::Result<ModelRows> {
    match &spec.kind {
        ModelKind::Stability { area_id, target } => {
            let csv = build_datasets::stability_csv_path(out_dir, area_id);
            let schema = build_datasets::stability_schema_path(out_dir, area_id);
            if !csv.is_file() {
                bail!(
                    "missing dataset {}; run the build-datasets stage first",
                    csv.display()
                );
            }
            let dataset = read_stability_dataset(&csv, &schema)?;
            let (hours, rows, targets) = dataset.rows_for_target(target)?;
            Ok(ModelRows {
                feature_names: dataset.features.feature_names(),
                hours,
                rows,
                targets,
                target_name: target.clone(),
            })
        }
        ModelKind::Flow { link_id } => {
            let csv = build_datasets::flow_csv_path(out_dir, link_id);
            let schema = build_datasets::flow_schema_path(out_dir, link_id);
            if !csv.is_file() {
                bail!(
                    "missing dataset {}; run the build-datasets stage first",
                    csv.display()
                );
            }
            let dataset = read_flow_dataset(&csv, &schema)?;
            let keep: Vec<usize> = dataset
                .target
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_nan())
                .map(|(i, _)| i)
                .collect();
            let features = dataset.features.select_rows(&keep);
            Ok(ModelRows {
                feature_names: features.feature_names(),
                hours: features.hours.clone(),
                rows: features.to_rows(),
                targets: keep.iter().map(|&i| dataset.target[i]).collect(),
                target_name: dataset.target_name.clone(),
            })
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub model_id: String,
    pub target_name: String,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub best_params: HyperParams,
    pub cv: CvTable,
    /// Training loss per boosting round, before truncation.
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub best_round: usize,
    pub test_mse: f64,
    /// None when the test target is constant.
    pub test_r2: Option<f64>,
    /// Hour-of-day profile predictor fit on the training portion.
    pub baseline_r2: Option<f64>,
    pub benchmark: Option<BenchmarkComparison>,
}

fn train_one(
    config: &PipelineConfig,
    ctx: &mut StageContext,
    spec: &ModelSpec,
    grid: &[HyperParams],
) -> anyhow::Result<()> {
    let data = load_model_rows(&ctx.out_dir, spec)
        .with_context(|| format!("loading data for {}", spec.model_id))?;
    let n = data.rows.len();
    let split_spec = SplitSpec {
        seed: split_seed(ctx.seed, &spec.model_id),
        ..config.split.clone()
    };
    let idx = split_shuffled(n, &split_spec)
        .with_context(|| format!("splitting {} rows for {}", n, spec.model_id))?;

    let gather = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>, Vec<DateTime<Utc>>) {
        (
            ix.iter().map(|&i| data.rows[i].clone()).collect(),
            ix.iter().map(|&i| data.targets[i]).collect(),
            ix.iter().map(|&i| data.hours[i]).collect(),
        )
    };
    let (train_rows, train_targets, train_hours) = gather(&idx.train);
    let (val_rows, val_targets, _) = gather(&idx.validation);
    let (test_rows, test_targets, test_hours) = gather(&idx.test);

    let train_ds = Dataset::new(data.feature_names.clone(), train_rows, train_targets.clone())?;
    let (mut best, cv) = grid_search_cv(
        &train_ds,
        grid,
        config.cv_folds,
        stage_seed(ctx.seed, &format!("cv:{}", spec.model_id)),
    )
    .with_context(|| format!("grid search for {}", spec.model_id))?;
    best.seed = stage_seed(ctx.seed, &format!("fit:{}", spec.model_id));

    let val_ds = Dataset::new(data.feature_names.clone(), val_rows, val_targets)?;
    let (model, history) = fit(&train_ds, Some(&val_ds), &best)
        .with_context(|| format!("final fit for {}", spec.model_id))?;

    let test_pred = model.predict(&test_rows);
    let test_mse = mse(&test_pred, &test_targets)?;
    let test_r2 = r2_score(&test_pred, &test_targets).ok();
    let baseline = fit_daily_profile(&train_hours, &train_targets)?;
    let baseline_pred = baseline.predict(&test_hours);
    let baseline_r2 = r2_score(&baseline_pred, &test_targets).ok();
    let benchmark = test_r2.zip(baseline_r2).map(|(m, b)| benchmark_comparison(m, b));

    let model_file = model_path(&ctx.out_dir, &spec.model_id);
    model.save(&model_file)?;
    log::info!(
        "{}: {} rounds kept, test MSE {:.6}, test R2 {}",
        spec.model_id,
        model.trees.len(),
        test_mse,
        test_r2.map_or_else(|| "n/a".into(), |r| format!("{r:.4}")),
    );
    let report = TrainReport {
        model_id: spec.model_id.clone(),
        target_name: data.target_name,
        n_rows: n,
        n_train: idx.train.len(),
        n_validation: idx.validation.len(),
        n_test: idx.test.len(),
        best_params: best,
        cv,
        train_mse: history.train_mse,
        validation_mse: history.validation_mse,
        best_round: history.best_round,
        test_mse,
        test_r2,
        baseline_r2,
        benchmark,
    };
    let report_file = report_path(&ctx.out_dir, &spec.model_id);
    super::write_json(&report_file, &report)?;
    ctx.add_artifact(model_file);
    ctx.add_artifact(report_file);
    Ok(())
}

pub fn run(config: &PipelineConfig, mut ctx: StageContext) -> anyhow::Result<()> {
    let specs = model_specs(config);
    if specs.is_empty() {
        bail!("config yields no models: no frequency areas and no links");
    }
    ctx.subdir("models")?;
    let grid = config.hyperparameter_grid();
    for spec in &specs {
        train_one(config, &mut ctx, spec, &grid)?;
    }
    ctx.finish()
}
