use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shuffled train/validation/test proportions. Validation and test counts
/// are rounded to nearest and the remainder goes to training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.64,
            validation_fraction: 0.16,
            test_fraction: 0.20,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train_fraction),
            ("validation", self.validation_fraction),
            ("test", self.test_fraction),
        ] {
            if !f.is_finite() || f <= 0.0 || f >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} fraction {f} must lie in (0, 1)"
                )));
            }
        }
        let total = self.train_fraction + self.validation_fraction + self.test_fraction;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split fractions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle 0..n and cut it into three disjoint index sets covering every row.
pub fn split_shuffled(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if n < 5 {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_val = (n as f64 * spec.validation_fraction).round() as usize;
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::DatasetTooSmall(n));
    }
    let n_train = n - n_val - n_test;

    let train = order[..n_train].to_vec();
    let validation = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok(SplitIndices { train, validation, test })
}

/// Shuffled k-fold partition of 0..n. Fold sizes differ by at most one;
/// the first n % k folds take the extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::DatasetTooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[offset..offset + size].to_vec());
        offset += size;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn hundred_rows_split_64_16_20() {
        let s = split_shuffled(100, &SplitSpec::default()).unwrap();
        assert_eq!(s.train.len(), 64);
        assert_eq!(s.validation.len(), 16);
        assert_eq!(s.test.len(), 20);
        let all: BTreeSet<usize> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .copied()
            .collect();
        assert_eq!(all.len(), 100);
        assert_eq!(*all.iter().next().unwrap(), 0);
        assert_eq!(*all.iter().last().unwrap(), 99);
    }

    #[test]
    fn ten_rows_split_6_2_2() {
        let s = split_shuffled(10, &SplitSpec::default()).unwrap();
        assert_eq!(s.train.len(), 6);
        assert_eq!(s.validation.len(), 2);
        assert_eq!(s.test.len(), 2);
    }

    #[test]
    fn tiny_dataset_is_rejected() {
        assert!(matches!(
            split_shuffled(4, &SplitSpec::default()),
            Err(Error::DatasetTooSmall(4))
        ));
    }

    #[test]
    fn same_seed_reproduces_split() {
        let a = split_shuffled(137, &SplitSpec::default()).unwrap();
        let b = split_shuffled(137, &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
        let other = split_shuffled(
            137,
            &SplitSpec { seed: 1, ..SplitSpec::default() },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let spec = SplitSpec {
            train_fraction: 0.5,
            validation_fraction: 0.2,
            test_fraction: 0.2,
            seed: 0,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn kfold_partitions_every_row_once() {
        let folds = kfold_indices(103, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![21, 21, 21, 20, 20]);
        let all: BTreeSet<usize> = folds.iter().flatten().copied().collect();
        assert_eq!(all.len(), 103);
    }

    #[test]
    fn kfold_is_seed_deterministic() {
        assert_eq!(kfold_indices(50, 5, 3).unwrap(), kfold_indices(50, 5, 3).unwrap());
        assert_ne!(kfold_indices(50, 5, 3).unwrap(), kfold_indices(50, 5, 4).unwrap());
    }
}
