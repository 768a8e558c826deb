use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::mse;
use super::tree::{Tree, TreeEnsemble, TreeNode};
use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::seeds::stage_seed;

/// Row-major training table. Feature cells may be NaN (missing); targets
/// must be finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let ds = Self { feature_names, rows, targets };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.targets.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} targets",
                self.rows.len(),
                self.targets.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.feature_names.len() {
                return Err(Error::InvalidInput(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    self.feature_names.len()
                )));
            }
        }
        if let Some(i) = self.targets.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite target at row {i}")));
        }
        Ok(())
    }

    /// Subset by row index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        let mut cols = vec![Vec::with_capacity(self.rows.len()); self.n_features()];
        for row in &self.rows {
            for (c, v) in row.iter().enumerate() {
                cols[c].push(*v);
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Upper bound on boosting rounds; early stopping may use fewer.
    pub number_of_rounds: usize,
    pub early_stopping_patience: Option<usize>,
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_leaves: 31,
            max_depth: 6,
            min_samples_leaf: 20,
            number_of_rounds: 200,
            early_stopping_patience: Some(20),
            feature_subsample: 1.0,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.max_leaves < 2 {
            return Err(Error::InvalidInput(format!(
                "max_leaves {} must be at least 2",
                self.max_leaves
            )));
        }
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidInput(
                "max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "feature_subsample {} outside (0, 1]",
                self.feature_subsample
            )));
        }
        if self.early_stopping_patience == Some(0) {
            return Err(Error::InvalidInput("early stopping patience must be positive".into()));
        }
        Ok(())
    }
}

/// Per-round losses plus the round the returned ensemble was truncated at.
/// `final_train_predictions` is the trainer's own bookkeeping for the kept
/// trees, recorded so callers can cross-check `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub best_round: usize,
    pub final_train_predictions: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

/// Best boundary on one sorted column: variance-reduction gain, midpoint
/// threshold, and the learned direction for missing rows. Ties keep the
/// lower threshold and missing-left.
fn best_split_on_feature(
    col: &[f64],
    residuals: &[f64],
    rows: &[usize],
    min_samples_leaf: usize,
) -> Option<(f64, f64, bool)> {
    let mut present: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    let mut missing_sum = 0.0;
    let mut missing_n = 0usize;
    for &i in rows {
        let v = col[i];
        if v.is_nan() {
            missing_sum += residuals[i];
            missing_n += 1;
        } else {
            present.push((v, residuals[i]));
        }
    }
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut total_present = 0.0;
    for (_, r) in &present {
        total_present += r;
    }
    let n_total = rows.len() as f64;
    let parent_sum = total_present + missing_sum;
    let parent_score = parent_sum * parent_sum / n_total;

    let mut best: Option<(f64, f64, bool)> = None;
    let mut left_sum = 0.0;
    for k in 0..present.len() - 1 {
        left_sum += present[k].1;
        let lo = present[k].0;
        let hi = present[k + 1].0;
        if lo >= hi {
            continue;
        }
        let mut thr = lo / 2.0 + hi / 2.0;
        if !(thr > lo) {
            // Adjacent representable values: fall back to the upper value,
            // which still routes lo left under the strict `<` rule.
            thr = hi;
        }
        let right_sum = total_present - left_sum;
        let n_left = k + 1;
        let n_right = present.len() - k - 1;
        // Missing-left evaluated first so a strict comparison keeps it on ties.
        let options = [
            (true, left_sum + missing_sum, n_left + missing_n, right_sum, n_right),
            (false, left_sum, n_left, right_sum + missing_sum, n_right + missing_n),
        ];
        for (default_left, ls, lc, rs, rc) in options {
            if lc < min_samples_leaf || rc < min_samples_leaf {
                continue;
            }
            let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - parent_score;
            if best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, thr, default_left));
            }
        }
    }
    best
}

fn compute_candidate(
    columns: &[Vec<f64>],
    residuals: &[f64],
    rows: &[usize],
    features: &[usize],
    depth: usize,
    params: &HyperParams,
) -> Option<Candidate> {
    if depth >= params.max_depth || rows.len() < 2 * params.min_samples_leaf {
        return None;
    }
    let per_feature: Vec<Option<(f64, f64, bool)>> = features
        .par_iter()
        .map(|&f| best_split_on_feature(&columns[f], residuals, rows, params.min_samples_leaf))
        .collect();
    // Sequential reduction in ascending feature order keeps ties deterministic.
    let mut best: Option<Candidate> = None;
    for (pos, entry) in per_feature.iter().enumerate() {
        if let Some((gain, threshold, default_left)) = *entry {
            if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
                best = Some(Candidate { gain, feature: features[pos], threshold, default_left });
            }
        }
    }
    best
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    candidate: Option<Candidate>,
}

/// Leaf-wise growth: repeatedly split the pending leaf with the largest
/// positive gain until max_leaves is reached or nothing improves. Returns
/// the tree and the final (leaf node id, training rows) assignment.
fn grow_tree(
    columns: &[Vec<f64>],
    residuals: &[f64],
    all_rows: Vec<usize>,
    features: &[usize],
    params: &HyperParams,
) -> (Tree, Vec<(usize, Vec<usize>)>) {
    let mut leaf_sum = 0.0;
    for &i in &all_rows {
        leaf_sum += residuals[i];
    }
    let root_value = leaf_sum / all_rows.len() as f64;
    let mut nodes = vec![TreeNode::leaf(root_value, all_rows.len() as f64)];
    let root_candidate = compute_candidate(columns, residuals, &all_rows, features, 0, params);
    // `pending` stays sorted by node id: removal preserves order and new
    // children always take the largest ids, so a strict max keeps the
    // lowest node id on gain ties.
    let mut pending = vec![Pending { node: 0, rows: all_rows, depth: 0, candidate: root_candidate }];

    while pending.len() < params.max_leaves {
        let mut chosen: Option<usize> = None;
        for (i, p) in pending.iter().enumerate() {
            if let Some(c) = &p.candidate {
                let beats = match chosen {
                    None => true,
                    Some(j) => c.gain > pending[j].candidate.as_ref().unwrap().gain,
                };
                if beats {
                    chosen = Some(i);
                }
            }
        }
        let Some(idx) = chosen else { break };
        let p = pending.remove(idx);
        let c = p.candidate.unwrap();

        let col = &columns[c.feature];
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        let (mut left_sum, mut right_sum) = (0.0, 0.0);
        for &i in &p.rows {
            let v = col[i];
            let go_left = if v.is_nan() { c.default_left } else { v < c.threshold };
            if go_left {
                left_sum += residuals[i];
                left_rows.push(i);
            } else {
                right_sum += residuals[i];
                right_rows.push(i);
            }
        }
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let left_id = nodes.len();
        nodes.push(TreeNode::leaf(left_sum / left_rows.len() as f64, left_rows.len() as f64));
        let right_id = nodes.len();
        nodes.push(TreeNode::leaf(right_sum / right_rows.len() as f64, right_rows.len() as f64));
        nodes[p.node] = TreeNode {
            split_feature: Some(c.feature),
            threshold: c.threshold,
            default_left: c.default_left,
            left: left_id,
            right: right_id,
            leaf_value: 0.0,
            cover: p.rows.len() as f64,
        };

        let left_candidate =
            compute_candidate(columns, residuals, &left_rows, features, p.depth + 1, params);
        let right_candidate =
            compute_candidate(columns, residuals, &right_rows, features, p.depth + 1, params);
        pending.push(Pending {
            node: left_id,
            rows: left_rows,
            depth: p.depth + 1,
            candidate: left_candidate,
        });
        pending.push(Pending {
            node: right_id,
            rows: right_rows,
            depth: p.depth + 1,
            candidate: right_candidate,
        });
    }

    let assignments = pending.into_iter().map(|p| (p.node, p.rows)).collect();
    (Tree { nodes }, assignments)
}

/// Boost squared-loss regression trees. Each round fits a tree to the
/// current residuals; leaf values are mean residuals, scaled by the
/// learning rate at prediction time. With a validation set, training stops
/// once the validation MSE has not improved for `early_stopping_patience`
/// consecutive rounds and the ensemble is truncated at the best round
/// (possibly zero trees).
pub fn fit(
    train: &Dataset,
    validation: Option<&Dataset>,
    params: &HyperParams,
) -> Result<(TreeEnsemble, TrainingHistory)> {
    params.validate()?;
    train.validate()?;
    if train.n_rows() < params.min_samples_leaf.max(1) {
        return Err(Error::DatasetTooSmall(train.n_rows()));
    }
    if let Some(val) = validation {
        val.validate()?;
        if val.feature_names != train.feature_names {
            return Err(Error::InvalidInput(
                "validation feature names do not match training feature names".into(),
            ));
        }
    }

    let columns = train.columns();
    let mut usable: Vec<usize> = Vec::new();
    for (f, col) in columns.iter().enumerate() {
        if col.iter().all(|v| v.is_nan()) {
            warn!("feature '{}' is missing in every training row; ignored", train.feature_names[f]);
        } else {
            usable.push(f);
        }
    }

    let n = train.n_rows();
    let base_score = mean(&train.targets);
    let mut preds = vec![base_score; n];
    let mut val_preds: Vec<f64> = validation.map_or_else(Vec::new, |v| vec![base_score; v.n_rows()]);

    let mut trees: Vec<Tree> = Vec::new();
    let mut train_history = Vec::new();
    let mut val_history = Vec::new();
    let mut best_round = 0usize;
    let mut best_val = validation
        .map(|v| mse(&val_preds, &v.targets).expect("matching lengths"))
        .unwrap_or(f64::INFINITY);
    let mut snapshot = preds.clone();
    let mut stale_rounds = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(params.seed, "feature-subsample"));

    for _round in 0..params.number_of_rounds {
        let residuals: Vec<f64> =
            train.targets.iter().zip(&preds).map(|(y, p)| y - p).collect();

        let features: Vec<usize> = if params.feature_subsample < 1.0 && usable.len() > 1 {
            let k = ((usable.len() as f64 * params.feature_subsample).ceil() as usize).max(1);
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, usable.len(), k)
                .iter()
                .map(|i| usable[i])
                .collect();
            picked.sort_unstable();
            picked
        } else {
            usable.clone()
        };

        let (tree, assignments) =
            grow_tree(&columns, &residuals, (0..n).collect(), &features, params);
        for (node_id, rows) in &assignments {
            let delta = params.learning_rate * tree.nodes[*node_id].leaf_value;
            for &i in rows {
                preds[i] += delta;
            }
        }
        trees.push(tree);
        train_history.push(mse(&preds, &train.targets).expect("matching lengths"));

        if let Some(val) = validation {
            let tree = trees.last().unwrap();
            for (p, row) in val_preds.iter_mut().zip(&val.rows) {
                *p += params.learning_rate * tree.predict_row(row);
            }
            let val_mse = mse(&val_preds, &val.targets).expect("matching lengths");
            val_history.push(val_mse);
            if val_mse < best_val {
                best_val = val_mse;
                best_round = trees.len();
                snapshot = preds.clone();
                stale_rounds = 0;
            } else {
                stale_rounds += 1;
                if let Some(patience) = params.early_stopping_patience {
                    if stale_rounds >= patience {
                        break;
                    }
                }
            }
        }
    }

    if validation.is_some() {
        trees.truncate(best_round);
    } else {
        best_round = trees.len();
        snapshot = preds;
    }

    let ensemble = TreeEnsemble {
        base_score,
        learning_rate: params.learning_rate,
        feature_names: train.feature_names.clone(),
        trees,
    };
    let history = TrainingHistory {
        train_mse: train_history,
        validation_mse: val_history,
        best_round,
        final_train_predictions: snapshot,
    };
    Ok((ensemble, history))
}
