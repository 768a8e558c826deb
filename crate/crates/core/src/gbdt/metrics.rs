use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};

/// Mean squared error between predictions and targets.
pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "prediction count {} does not match target count {}",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("mse of empty slice".into()));
    }
    let sq: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// Coefficient of determination, 1 - SSE/SST. Errors when the target is
/// constant because SST is zero.
pub fn r2_score(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "r2 needs matching non-empty slices, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let target_mean = mean(targets);
    let sst: Vec<f64> = targets.iter().map(|t| (t - target_mean) * (t - target_mean)).collect();
    let sst = pairwise_sum(&sst);
    if sst == 0.0 {
        return Err(Error::ConstantTarget);
    }
    let sse: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .collect();
    Ok(1.0 - pairwise_sum(&sse) / sst)
}

/// Baseline predictor that memorizes the mean target per hour of day.
/// Hours of day never seen in training fall back to the global mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailyProfile {
    pub bucket_means: [f64; 24],
    pub global_mean: f64,
}

pub fn fit_daily_profile(hours: &[DateTime<Utc>], targets: &[f64]) -> Result<DailyProfile> {
    if hours.len() != targets.len() || hours.is_empty() {
        return Err(Error::InvalidInput(format!(
            "daily profile needs matching non-empty slices, got {} and {}",
            hours.len(),
            targets.len()
        )));
    }
    let mut sums = [0.0f64; 24];
    let mut counts = [0usize; 24];
    for (h, t) in hours.iter().zip(targets) {
        if t.is_nan() {
            return Err(Error::InvalidInput("daily profile target contains NaN".into()));
        }
        let b = h.hour() as usize;
        sums[b] += t;
        counts[b] += 1;
    }
    let global_mean = mean(targets);
    let mut bucket_means = [0.0f64; 24];
    for b in 0..24 {
        bucket_means[b] = if counts[b] > 0 { sums[b] / counts[b] as f64 } else { global_mean };
    }
    Ok(DailyProfile { bucket_means, global_mean })
}

impl DailyProfile {
    pub fn predict_hour(&self, hour: DateTime<Utc>) -> f64 {
        self.bucket_means[hour.hour() as usize]
    }

    pub fn predict(&self, hours: &[DateTime<Utc>]) -> Vec<f64> {
        hours.iter().map(|h| self.predict_hour(*h)).collect()
    }
}
