//! Gradient boosted regression trees with squared loss.
//!
//! Exact greedy splits on sorted values, leaf-wise growth, learned default
//! directions for missing values, early stopping on a validation set, and a
//! grid-search / 5-fold cross-validation harness. Training is deterministic
//! for a fixed seed: parallelism only spans independent units (folds, grid
//! points) and every reduction has a fixed order.

mod metrics;
mod search;
mod split;
mod train;
mod tree;

pub use metrics::{fit_daily_profile, mse, r2_score, DailyProfile};
pub use search::{default_grid, grid_search_cv, CvEntry, CvTable};
pub use split::{kfold_indices, split_shuffled, SplitIndices, SplitSpec};
pub use train::{fit, Dataset, HyperParams, TrainingHistory};
pub use tree::{Tree, TreeEnsemble, TreeNode};
