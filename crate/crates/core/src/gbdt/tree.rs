use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// One node of a regression tree arena. Internal nodes carry the split
/// triple and child indices; leaves carry the value. `cover` is the number
/// of training rows that reached the node and encodes the background
/// distribution used by the attribution code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// None marks a leaf.
    pub split_feature: Option<usize>,
    /// Rows with feature < threshold go left; missing rows follow
    /// `default_left`.
    pub threshold: f64,
    pub default_left: bool,
    pub left: usize,
    pub right: usize,
    pub leaf_value: f64,
    pub cover: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            split_feature: None,
            threshold: 0.0,
            default_left: true,
            left: 0,
            right: 0,
            leaf_value: value,
            cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split_feature.is_none()
    }

    /// Child index the row descends to.
    pub fn route(&self, row: &[f64]) -> usize {
        let f = self.split_feature.expect("route called on a leaf");
        let v = row[f];
        let go_left = if v.is_nan() { self.default_left } else { v < self.threshold };
        if go_left {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root at index 0.
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            if node.is_leaf() {
                return node.leaf_value;
            }
            idx = node.route(row);
        }
    }

    /// Depth in edges; 0 for a single leaf.
    pub fn max_depth(&self) -> usize {
        fn depth(nodes: &[TreeNode], idx: usize) -> usize {
            let node = &nodes[idx];
            if node.is_leaf() {
                0
            } else {
                1 + depth(nodes, node.left).max(depth(nodes, node.right))
            }
        }
        depth(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

/// Boosted ensemble. Leaf values are raw residual means; `predict` scales
/// each tree's output by `learning_rate` and adds `base_score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.n_features());
        let mut acc = self.base_score;
        for tree in &self.trees {
            acc += self.learning_rate * tree.predict_row(row);
        }
        acc
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let ensemble: TreeEnsemble =
            serde_json::from_str(raw).map_err(|e| Error::ModelFormat(e.to_string()))?;
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&raw)
    }

    /// Structural checks: child indices in range, finite values, feature
    /// indices within arity, child covers summing to the parent cover.
    pub fn validate(&self) -> Result<()> {
        let arity = self.n_features();
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::ModelFormat(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if !node.cover.is_finite() || node.cover < 0.0 {
                    return Err(Error::ModelFormat(format!(
                        "tree {t}, node {i}: bad cover {}",
                        node.cover
                    )));
                }
                if let Some(f) = node.split_feature {
                    if f >= arity {
                        return Err(Error::ModelFormat(format!(
                            "tree {t}, node {i}: split feature {f} out of range"
                        )));
                    }
                    if node.left >= tree.nodes.len() || node.right >= tree.nodes.len() {
                        return Err(Error::ModelFormat(format!(
                            "tree {t}, node {i}: child index out of range"
                        )));
                    }
                    if !node.threshold.is_finite() {
                        return Err(Error::ModelFormat(format!(
                            "tree {t}, node {i}: non-finite threshold"
                        )));
                    }
                    let sum = tree.nodes[node.left].cover + tree.nodes[node.right].cover;
                    if (sum - node.cover).abs() > 1e-6 * node.cover.max(1.0) {
                        return Err(Error::ModelFormat(format!(
                            "tree {t}, node {i}: child covers {sum} != parent cover {}",
                            node.cover
                        )));
                    }
                } else if !node.leaf_value.is_finite() {
                    return Err(Error::ModelFormat(format!(
                        "tree {t}, node {i}: non-finite leaf value"
                    )));
                }
            }
        }
        Ok(())
    }
}
