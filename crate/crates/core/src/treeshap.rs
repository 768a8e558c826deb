//! Exact per-feature attributions for tree-ensemble predictions.
//!
//! The game being solved: a prediction where only the features in a subset S
//! are known routes normally at their splits and takes a cover-weighted
//! average over both children everywhere else. `shap_exact` computes the
//! Shapley values of that game with the polynomial-time path-tracking
//! recursion; `shap_bruteforce` enumerates subsets directly and exists to
//! check `shap_exact` against the definition on small models.

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gbdt::{Tree, TreeEnsemble};
use crate::ingest::format_utc;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapResult {
    /// Expected model output over the training distribution encoded by the
    /// covers; identical for every row of the same model.
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub prediction: f64,
}

fn check_row_arity(ensemble: &TreeEnsemble, row: &[f64]) -> Result<()> {
    if row.len() != ensemble.n_features() {
        return Err(Error::InvalidInput(format!(
            "row has {} cells but the model expects {}",
            row.len(),
            ensemble.n_features()
        )));
    }
    Ok(())
}

fn check_covers(ensemble: &TreeEnsemble) -> Result<()> {
    for (t, tree) in ensemble.trees.iter().enumerate() {
        for (i, node) in tree.nodes.iter().enumerate() {
            if !node.is_leaf() && !(node.cover > 0.0) {
                return Err(Error::ZeroCover { tree: t, node: i, cover: node.cover });
            }
        }
    }
    Ok(())
}

fn node_expectation(tree: &Tree, idx: usize) -> f64 {
    let node = &tree.nodes[idx];
    if node.is_leaf() {
        return node.leaf_value;
    }
    let left = node_expectation(tree, node.left);
    let right = node_expectation(tree, node.right);
    (tree.nodes[node.left].cover * left + tree.nodes[node.right].cover * right) / node.cover
}

/// Cover-weighted mean leaf value plus base score: the attribution base φ₀.
pub fn expected_value(ensemble: &TreeEnsemble) -> f64 {
    let mut acc = ensemble.base_score;
    for tree in &ensemble.trees {
        acc += ensemble.learning_rate * node_expectation(tree, 0);
    }
    acc
}

#[derive(Debug, Clone)]
struct PathItem {
    feature_index: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

impl PathItem {
    fn empty() -> Self {
        Self { feature_index: None, zero_fraction: 0.0, one_fraction: 0.0, pweight: 0.0 }
    }
}

fn extend_path(
    unique_path: &mut [PathItem],
    unique_depth: usize,
    zero_fraction: f64,
    one_fraction: f64,
    feature_index: Option<usize>,
) {
    unique_path[unique_depth] = PathItem {
        feature_index,
        zero_fraction,
        one_fraction,
        pweight: if unique_depth == 0 { 1.0 } else { 0.0 },
    };
    for i in (0..unique_depth).rev() {
        unique_path[i + 1].pweight +=
            one_fraction * unique_path[i].pweight * (i + 1) as f64 / (unique_depth + 1) as f64;
        unique_path[i].pweight =
            zero_fraction * unique_path[i].pweight * (unique_depth - i) as f64
                / (unique_depth + 1) as f64;
    }
}

fn unwind_path(unique_path: &mut [PathItem], unique_depth: usize, path_index: usize) {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    for i in (0..unique_depth).rev() {
        if one_fraction != 0.0 {
            let tmp = unique_path[i].pweight;
            unique_path[i].pweight =
                next_one_portion * (unique_depth + 1) as f64 / ((i + 1) as f64 * one_fraction);
            next_one_portion = tmp
                - unique_path[i].pweight * zero_fraction * (unique_depth - i) as f64
                    / (unique_depth + 1) as f64;
        } else {
            unique_path[i].pweight = unique_path[i].pweight * (unique_depth + 1) as f64
                / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    for i in path_index..unique_depth {
        unique_path[i].feature_index = unique_path[i + 1].feature_index;
        unique_path[i].zero_fraction = unique_path[i + 1].zero_fraction;
        unique_path[i].one_fraction = unique_path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(unique_path: &[PathItem], unique_depth: usize, path_index: usize) -> f64 {
    let one_fraction = unique_path[path_index].one_fraction;
    let zero_fraction = unique_path[path_index].zero_fraction;
    let mut next_one_portion = unique_path[unique_depth].pweight;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        for i in (0..unique_depth).rev() {
            let tmp = next_one_portion / ((i + 1) as f64 * one_fraction);
            total += tmp;
            next_one_portion =
                unique_path[i].pweight - tmp * zero_fraction * (unique_depth - i) as f64;
        }
    } else {
        for i in (0..unique_depth).rev() {
            total += unique_path[i].pweight / (zero_fraction * (unique_depth - i) as f64);
        }
    }
    total * (unique_depth + 1) as f64
}

struct RecursiveArgs<'a> {
    tree: &'a Tree,
    row: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
    node_index: usize,
    unique_path: &'a mut [PathItem],
    unique_depth: usize,
    parent_zero_fraction: f64,
    parent_one_fraction: f64,
    parent_feature_index: Option<usize>,
}

fn tree_shap_recursive(args: RecursiveArgs) {
    let RecursiveArgs {
        tree,
        row,
        phi,
        scale,
        node_index,
        unique_path,
        mut unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature_index,
    } = args;
    extend_path(
        unique_path,
        unique_depth,
        parent_zero_fraction,
        parent_one_fraction,
        parent_feature_index,
    );
    let node = &tree.nodes[node_index];
    if node.is_leaf() {
        for path_index in 1..=unique_depth {
            let weight = unwound_path_sum(unique_path, unique_depth, path_index);
            let item = &unique_path[path_index];
            phi[item.feature_index.unwrap()] +=
                weight * (item.one_fraction - item.zero_fraction) * node.leaf_value * scale;
        }
        return;
    }

    let feature = node.split_feature.unwrap();
    let v = row[feature];
    let go_left = if v.is_nan() { node.default_left } else { v < node.threshold };
    let (hot, cold) = if go_left { (node.left, node.right) } else { (node.right, node.left) };
    let hot_zero_fraction = tree.nodes[hot].cover / node.cover;
    let cold_zero_fraction = tree.nodes[cold].cover / node.cover;

    // A feature met twice on one path is unwound and re-extended with the
    // combined fractions so it occupies a single path slot.
    let mut incoming_zero_fraction = 1.0;
    let mut incoming_one_fraction = 1.0;
    if let Some(path_index) =
        (1..=unique_depth).find(|i| unique_path[*i].feature_index == Some(feature))
    {
        incoming_zero_fraction = unique_path[path_index].zero_fraction;
        incoming_one_fraction = unique_path[path_index].one_fraction;
        unwind_path(unique_path, unique_depth, path_index);
        unique_depth -= 1;
    }

    let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
    child_path[0..parent_path.len()].clone_from_slice(parent_path);
    tree_shap_recursive(RecursiveArgs {
        tree,
        row,
        phi,
        scale,
        node_index: hot,
        unique_path: child_path,
        unique_depth: unique_depth + 1,
        parent_zero_fraction: hot_zero_fraction * incoming_zero_fraction,
        parent_one_fraction: incoming_one_fraction,
        parent_feature_index: Some(feature),
    });
    let (parent_path, child_path) = unique_path.split_at_mut(unique_depth + 1);
    child_path[0..parent_path.len()].clone_from_slice(parent_path);
    tree_shap_recursive(RecursiveArgs {
        tree,
        row,
        phi,
        scale,
        node_index: cold,
        unique_path: child_path,
        unique_depth: unique_depth + 1,
        parent_zero_fraction: cold_zero_fraction * incoming_zero_fraction,
        parent_one_fraction: 0.0,
        parent_feature_index: Some(feature),
    });
}

fn tree_shap(tree: &Tree, row: &[f64], phi: &mut [f64], scale: f64) {
    let levels = tree.max_depth() + 2;
    let mut unique_path = vec![PathItem::empty(); levels * (levels + 1) / 2];
    tree_shap_recursive(RecursiveArgs {
        tree,
        row,
        phi,
        scale,
        node_index: 0,
        unique_path: &mut unique_path,
        unique_depth: 0,
        parent_zero_fraction: 1.0,
        parent_one_fraction: 1.0,
        parent_feature_index: None,
    });
}

fn shap_exact_unchecked(ensemble: &TreeEnsemble, row: &[f64]) -> ShapResult {
    let mut phi = vec![0.0; ensemble.n_features()];
    for tree in &ensemble.trees {
        tree_shap(tree, row, &mut phi, ensemble.learning_rate);
    }
    ShapResult {
        base_value: expected_value(ensemble),
        phi,
        prediction: ensemble.predict_row(row),
    }
}

/// Shapley values of the cover-weighted expectation game, summed over trees.
pub fn shap_exact(ensemble: &TreeEnsemble, row: &[f64]) -> Result<ShapResult> {
    check_row_arity(ensemble, row)?;
    check_covers(ensemble)?;
    Ok(shap_exact_unchecked(ensemble, row))
}

/// Row-parallel `shap_exact` with the model checked once.
pub fn shap_batch(ensemble: &TreeEnsemble, rows: &[Vec<f64>]) -> Result<Vec<ShapResult>> {
    for row in rows {
        check_row_arity(ensemble, row)?;
    }
    check_covers(ensemble)?;
    Ok(rows.par_iter().map(|row| shap_exact_unchecked(ensemble, row)).collect())
}

const BRUTEFORCE_FEATURE_LIMIT: usize = 20;

/// Exact for n ≤ 62 or so; the running product is a binomial at every step.
fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// v(S): route at splits whose feature is in the mask, take cover-weighted
/// child averages everywhere else.
fn coalition_value(
    tree: &Tree,
    idx: usize,
    row: &[f64],
    position: &[Option<usize>],
    mask: u64,
) -> f64 {
    let node = &tree.nodes[idx];
    let Some(feature) = node.split_feature else {
        return node.leaf_value;
    };
    let in_coalition = position[feature].is_some_and(|p| mask & (1 << p) != 0);
    if in_coalition {
        coalition_value(tree, node.route(row), row, position, mask)
    } else {
        let left = coalition_value(tree, node.left, row, position, mask);
        let right = coalition_value(tree, node.right, row, position, mask);
        (tree.nodes[node.left].cover * left + tree.nodes[node.right].cover * right) / node.cover
    }
}

/// Shapley values by subset enumeration over the features the ensemble
/// actually splits on. Features that are never split on are dummy players
/// with exactly zero attribution, so restricting the player set to the
/// active features leaves the remaining values unchanged.
pub fn shap_bruteforce(ensemble: &TreeEnsemble, row: &[f64]) -> Result<ShapResult> {
    check_row_arity(ensemble, row)?;
    check_covers(ensemble)?;

    let mut is_active = vec![false; ensemble.n_features()];
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let Some(f) = node.split_feature {
                is_active[f] = true;
            }
        }
    }
    let active: Vec<usize> =
        (0..ensemble.n_features()).filter(|&f| is_active[f]).collect();
    if active.len() > BRUTEFORCE_FEATURE_LIMIT {
        return Err(Error::TooManyFeatures {
            active: active.len(),
            limit: BRUTEFORCE_FEATURE_LIMIT,
        });
    }
    let mut position = vec![None; ensemble.n_features()];
    for (p, &f) in active.iter().enumerate() {
        position[f] = Some(p);
    }

    let a = active.len();
    let n_masks = 1usize << a;
    let mut v = vec![ensemble.base_score; n_masks];
    for tree in &ensemble.trees {
        for (mask, value) in v.iter_mut().enumerate() {
            *value +=
                ensemble.learning_rate * coalition_value(tree, 0, row, &position, mask as u64);
        }
    }

    // w(s) = s!(a-1-s)!/a! = 1 / (a * C(a-1, s)), exact in u64 before the
    // single rounding of the division.
    let weights: Vec<f64> = (0..a)
        .map(|s| 1.0 / (a as f64 * binomial(a as u64 - 1, s as u64) as f64))
        .collect();

    let mut phi = vec![0.0; ensemble.n_features()];
    for (p, &f) in active.iter().enumerate() {
        let bit = 1usize << p;
        let mut acc = 0.0;
        for mask in 0..n_masks {
            if mask & bit != 0 {
                continue;
            }
            acc += weights[(mask as u64).count_ones() as usize] * (v[mask | bit] - v[mask]);
        }
        phi[f] = acc;
    }

    Ok(ShapResult { base_value: v[0], phi, prediction: ensemble.predict_row(row) })
}

/// One row per explained hour: `hour, phi_<feature...>, base_value, prediction`.
pub fn write_shap_csv(
    path: &Path,
    hours: &[DateTime<Utc>],
    feature_names: &[String],
    results: &[ShapResult],
) -> Result<()> {
    if hours.len() != results.len() {
        return Err(Error::InvalidInput(format!(
            "{} hours but {} attribution rows",
            hours.len(),
            results.len()
        )));
    }
    let csv_error = |e: csv::Error| Error::Csv { path: path.to_path_buf(), source: e };
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec!["hour".to_string()];
    header.extend(feature_names.iter().map(|f| format!("phi_{f}")));
    header.push("base_value".into());
    header.push("prediction".into());
    writer.write_record(&header).map_err(csv_error)?;
    for (hour, result) in hours.iter().zip(results) {
        if result.phi.len() != feature_names.len() {
            return Err(Error::InvalidInput(format!(
                "attribution row has {} features, header has {}",
                result.phi.len(),
                feature_names.len()
            )));
        }
        let mut record = vec![format_utc(*hour)];
        record.extend(result.phi.iter().map(|p| format!("{p}")));
        record.push(format!("{}", result.base_value));
        record.push(format!("{}", result.prediction));
        writer.write_record(&record).map_err(csv_error)?;
    }
    writer.flush().map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}
