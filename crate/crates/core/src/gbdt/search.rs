use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::mse;
use super::split::kfold_indices;
use super::train::{fit, Dataset, HyperParams};
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::seeds::{stage_seed, unit_seed};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvEntry {
    pub params: HyperParams,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvTable {
    pub entries: Vec<CvEntry>,
    pub best_index: usize,
    pub folds: usize,
}

/// Cartesian product of the stock grid over a base configuration.
pub fn default_grid(base: &HyperParams) -> Vec<HyperParams> {
    let mut grid = Vec::new();
    for &learning_rate in &[0.05, 0.1] {
        for &max_leaves in &[15, 31, 63] {
            for &min_samples_leaf in &[20, 100] {
                grid.push(HyperParams {
                    learning_rate,
                    max_leaves,
                    min_samples_leaf,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// Strictly better under the tie-break chain: mean MSE, then smaller
/// max_leaves, then smaller learning_rate. NaN scores lose to everything.
fn better(a: &CvEntry, b: &CvEntry) -> bool {
    if a.mean_mse.is_nan() {
        return false;
    }
    if b.mean_mse.is_nan() {
        return true;
    }
    if a.mean_mse != b.mean_mse {
        return a.mean_mse < b.mean_mse;
    }
    if a.params.max_leaves != b.params.max_leaves {
        return a.params.max_leaves < b.params.max_leaves;
    }
    if a.params.learning_rate != b.params.learning_rate {
        return a.params.learning_rate < b.params.learning_rate;
    }
    false
}

/// Score every grid point by mean held-out MSE over k deterministic folds.
/// Each fold doubles as the early-stopping validation set for its fit. Grid
/// x fold fits run in parallel; scores are reduced in fixed order.
pub fn grid_search_cv(
    train: &Dataset,
    grid: &[HyperParams],
    folds: usize,
    seed: u64,
) -> Result<(HyperParams, CvTable)> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty hyperparameter grid".into()));
    }
    for params in grid {
        params.validate()?;
    }
    train.validate()?;
    let fold_sets = kfold_indices(train.n_rows(), folds, stage_seed(seed, "cv-folds"))?;

    let all: Vec<usize> = (0..train.n_rows()).collect();
    let fit_seed = stage_seed(seed, "cv-fit");
    let jobs: Vec<(usize, usize)> =
        (0..grid.len()).flat_map(|g| (0..folds).map(move |f| (g, f))).collect();

    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(g, f)| {
            let held_out = &fold_sets[f];
            let mut in_fold = vec![true; train.n_rows()];
            for &i in held_out {
                in_fold[i] = false;
            }
            let fit_rows: Vec<usize> = all.iter().copied().filter(|&i| in_fold[i]).collect();
            let sub_train = train.select(&fit_rows);
            let sub_val = train.select(held_out);
            let mut params = grid[g].clone();
            params.seed = unit_seed(fit_seed, (g * folds + f) as u64);
            let (model, _) = fit(&sub_train, Some(&sub_val), &params)?;
            mse(&model.predict(&sub_val.rows), &sub_val.targets)
        })
        .collect::<Result<Vec<f64>>>()?;

    let entries: Vec<CvEntry> = grid
        .iter()
        .enumerate()
        .map(|(g, params)| {
            let fold_mse: Vec<f64> = (0..folds).map(|f| scores[g * folds + f]).collect();
            let mean_mse = pairwise_sum(&fold_mse) / folds as f64;
            CvEntry { params: params.clone(), fold_mse, mean_mse }
        })
        .collect();

    let mut best_index = 0;
    for (i, entry) in entries.iter().enumerate().skip(1) {
        if better(entry, &entries[best_index]) {
            best_index = i;
        }
    }
    let best = entries[best_index].params.clone();
    Ok((best, CvTable { entries, best_index, folds }))
}
