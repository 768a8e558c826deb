//! Reporting layer: normalized feature importances, Kendall rank
//! correlations, SHAP dependency tables, relative ramp speeds, and model
//! vs. baseline comparisons.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::mean;
use crate::treeshap::ShapResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub importance: f64,
    pub rank: usize,
}

/// Per-model importances, sorted by rank. Importances sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub model_id: String,
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn top_k(&self, k: usize) -> &[ImportanceEntry] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// importance_k = mean_rows |phi_k| / sum_j mean_rows |phi_j|. Rank ties
/// keep the earlier feature first.
pub fn normalized_importance(
    model_id: &str,
    feature_names: &[String],
    shap: &[ShapResult],
) -> Result<ImportanceReport> {
    if shap.is_empty() {
        return Err(Error::InvalidInput("importance of an empty attribution matrix".into()));
    }
    for r in shap {
        if r.phi.len() != feature_names.len() {
            return Err(Error::InvalidInput(format!(
                "attribution row has {} features, expected {}",
                r.phi.len(),
                feature_names.len()
            )));
        }
    }
    let n_rows = shap.len() as f64;
    let mut mean_abs: Vec<f64> = vec![0.0; feature_names.len()];
    for r in shap {
        for (acc, phi) in mean_abs.iter_mut().zip(&r.phi) {
            *acc += phi.abs();
        }
    }
    for acc in &mut mean_abs {
        *acc /= n_rows;
    }
    let total: f64 = mean_abs.iter().sum();
    if total == 0.0 {
        return Err(Error::AllZeroAttributions);
    }

    let mut order: Vec<usize> = (0..feature_names.len()).collect();
    order.sort_by(|&a, &b| mean_abs[b].partial_cmp(&mean_abs[a]).unwrap().then(a.cmp(&b)));
    let entries = order
        .iter()
        .enumerate()
        .map(|(rank, &f)| ImportanceEntry {
            feature: feature_names[f].clone(),
            importance: mean_abs[f] / total,
            rank: rank + 1,
        })
        .collect();
    Ok(ImportanceReport { model_id: model_id.to_string(), entries })
}

/// Final tau-b expression, shared by the fast path and the pair oracle so
/// identical integer counts give bit-identical results.
/// n0 = all pairs, n1 = pairs tied in x, n2 = pairs tied in y.
fn tau_from_counts(c_minus_d: i128, n0: u128, n1: u128, n2: u128) -> Result<f64> {
    if n0 == n1 || n0 == n2 {
        return Err(Error::ConstantTarget);
    }
    let tau = c_minus_d as f64 / (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    Ok(tau.clamp(-1.0, 1.0))
}

fn check_tau_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("rank correlation input contains NaN".into()));
    }
    Ok(())
}

fn tied_pairs(run: u128) -> u128 {
    run * (run - 1) / 2
}

/// Tie-corrected Kendall rank correlation (tau-b): sort by x, count
/// discordant pairs as merge-sort inversions on y, correct for tied runs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_tau_inputs(x, y)?;
    let n = x.len();

    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    // Runs of equal x give n1; runs of equal (x, y) give the both-tied count.
    let mut n1: u128 = 0;
    let mut n_both: u128 = 0;
    let mut x_run: u128 = 1;
    let mut xy_run: u128 = 1;
    for i in 1..n {
        if pairs[i].0 == pairs[i - 1].0 {
            x_run += 1;
            if pairs[i].1 == pairs[i - 1].1 {
                xy_run += 1;
            } else {
                n_both += tied_pairs(xy_run);
                xy_run = 1;
            }
        } else {
            n1 += tied_pairs(x_run);
            x_run = 1;
            n_both += tied_pairs(xy_run);
            xy_run = 1;
        }
    }
    n1 += tied_pairs(x_run);
    n_both += tied_pairs(xy_run);

    // Bottom-up merge sort of the y sequence, counting inversions. Pairs
    // tied in x were pre-sorted by y, so they never count as inversions.
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0f64; n];
    let mut inversions: u128 = 0;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid || j < hi {
                if i < mid && (j >= hi || ys[i] <= ys[j]) {
                    buf[k] = ys[i];
                    i += 1;
                } else {
                    inversions += (mid - i) as u128;
                    buf[k] = ys[j];
                    j += 1;
                }
                k += 1;
            }
            lo = hi;
        }
        std::mem::swap(&mut ys, &mut buf);
        width *= 2;
    }

    let mut n2: u128 = 0;
    let mut y_run: u128 = 1;
    for i in 1..n {
        if ys[i] == ys[i - 1] {
            y_run += 1;
        } else {
            n2 += tied_pairs(y_run);
            y_run = 1;
        }
    }
    n2 += tied_pairs(y_run);

    let n0 = tied_pairs(n as u128 + 1) - (n as u128); // n(n-1)/2
    // C - D = n0 - n1 - n2 + n_both - 2 * discordant.
    let c_minus_d =
        n0 as i128 - n1 as i128 - n2 as i128 + n_both as i128 - 2 * inversions as i128;
    tau_from_counts(c_minus_d, n0, n1, n2)
}

/// O(n^2) pair enumeration feeding the same final expression as
/// `kendall_tau`; the two must agree bit for bit.
pub fn kendall_tau_bruteforce(x: &[f64], y: &[f64]) -> Result<f64> {
    check_tau_inputs(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant) = (0i128, 0i128);
    let (mut n0, mut n1, mut n2) = (0u128, 0u128, 0u128);
    for i in 0..n {
        for j in i + 1..n {
            n0 += 1;
            let dx = x[i].total_cmp(&x[j]);
            let dy = y[i].total_cmp(&y[j]);
            if dx.is_eq() {
                n1 += 1;
            }
            if dy.is_eq() {
                n2 += 1;
            }
            if !dx.is_eq() && !dy.is_eq() {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    tau_from_counts(concordant - discordant, n0, n1, n2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingLabel {
    ControlLike,
    DisturbanceLike,
    Ambiguous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowCorrelation {
    pub tau: f64,
    pub label: CouplingLabel,
}

/// Correlate a frequency-integral attribution column with unscheduled
/// outflow, which the caller orients positive out of the area whose integral
/// is examined. Positive tau reads as control-like behavior, negative as
/// disturbance-like; |tau| at or below the dead zone stays unlabeled.
pub fn shap_flow_correlation(
    phi_integral: &[f64],
    outflow: &[f64],
    dead_zone: f64,
) -> Result<FlowCorrelation> {
    if !(0.0..1.0).contains(&dead_zone) {
        return Err(Error::InvalidInput(format!("dead zone {dead_zone} outside [0, 1)")));
    }
    let tau = kendall_tau(phi_integral, outflow)?;
    let label = if tau > dead_zone {
        CouplingLabel::ControlLike
    } else if tau < -dead_zone {
        CouplingLabel::DisturbanceLike
    } else {
        CouplingLabel::Ambiguous
    };
    Ok(FlowCorrelation { tau, label })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RampEntry {
    pub name: String,
    /// Mean absolute hourly power change, MW.
    pub delta_p_mw: f64,
    /// Share of full load per minute.
    pub ramp_rate_per_min: f64,
    pub rocop_mw_per_min: f64,
    /// RoCoP relative to the fastest entry; the fastest is exactly 1.
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RampSpeedTable {
    pub entries: Vec<RampEntry>,
}

/// RoCoP = delta_p * ramp rate; s scales each RoCoP by the table maximum.
pub fn ramp_speed(entries: &[(String, f64, f64)]) -> Result<RampSpeedTable> {
    if entries.is_empty() {
        return Err(Error::InvalidInput("empty ramp table".into()));
    }
    for (name, delta_p, rate) in entries {
        if !delta_p.is_finite() || *delta_p < 0.0 {
            return Err(Error::InvalidInput(format!("{name}: delta P {delta_p} must be >= 0")));
        }
        if !rate.is_finite() || *rate <= 0.0 {
            return Err(Error::InvalidInput(format!("{name}: ramp rate {rate} must be > 0")));
        }
    }
    let rocop: Vec<f64> = entries.iter().map(|(_, dp, r)| dp * r).collect();
    let max = rocop.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidInput(
            "all ramp entries have zero power change; relative speed undefined".into(),
        ));
    }
    let entries = entries
        .iter()
        .zip(&rocop)
        .map(|((name, delta_p, rate), rocop)| RampEntry {
            name: name.clone(),
            delta_p_mw: *delta_p,
            ramp_rate_per_min: *rate,
            rocop_mw_per_min: *rocop,
            s: rocop / max,
        })
        .collect();
    Ok(RampSpeedTable { entries })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependencyTable {
    pub feature_values: Vec<f64>,
    pub shap_values: Vec<f64>,
    pub color_values: Option<Vec<f64>>,
    /// None when either retained column is constant.
    pub tau: Option<f64>,
}

/// Plot-ready (feature, attribution, color) triples. Rows where the feature
/// or attribution is not finite are dropped; tau is computed on what remains.
pub fn dependency_table(
    feature: &[f64],
    shap: &[f64],
    color: Option<&[f64]>,
) -> Result<DependencyTable> {
    if feature.len() != shap.len() || color.is_some_and(|c| c.len() != feature.len()) {
        return Err(Error::InvalidInput("dependency columns differ in length".into()));
    }
    let keep: Vec<usize> = (0..feature.len())
        .filter(|&i| feature[i].is_finite() && shap[i].is_finite())
        .collect();
    let feature_values: Vec<f64> = keep.iter().map(|&i| feature[i]).collect();
    let shap_values: Vec<f64> = keep.iter().map(|&i| shap[i]).collect();
    let color_values = color.map(|c| keep.iter().map(|&i| c[i]).collect());
    let tau = if feature_values.len() >= 2 {
        match kendall_tau(&feature_values, &shap_values) {
            Ok(t) => Some(t),
            Err(Error::ConstantTarget) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(DependencyTable { feature_values, shap_values, color_values, tau })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkComparison {
    pub model_r2: f64,
    pub baseline_r2: f64,
    /// model / baseline; None when the baseline is not positive.
    pub factor: Option<f64>,
    pub difference: f64,
}

pub fn benchmark_comparison(model_r2: f64, baseline_r2: f64) -> BenchmarkComparison {
    let factor = if baseline_r2 > 0.0 { Some(model_r2 / baseline_r2) } else { None };
    BenchmarkComparison { model_r2, baseline_r2, factor, difference: model_r2 - baseline_r2 }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv { path: path.to_path_buf(), source: e }
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

/// `model_id,feature,importance,rank`, one block per report.
pub fn write_importance_csv(path: &Path, reports: &[ImportanceReport]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error(path))?;
    writer
        .write_record(["model_id", "feature", "importance", "rank"])
        .map_err(csv_error(path))?;
    for report in reports {
        for e in &report.entries {
            writer
                .write_record([
                    report.model_id.as_str(),
                    e.feature.as_str(),
                    &format!("{}", e.importance),
                    &format!("{}", e.rank),
                ])
                .map_err(csv_error(path))?;
        }
    }
    writer.flush().map_err(io_error(path))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DependencyHeader {
    tau: Option<f64>,
    rows: usize,
    has_color: bool,
}

/// `feature_value,shap_value,color_value` plus a JSON sidecar with tau.
pub fn write_dependency_csv(
    csv_path: &Path,
    header_path: &Path,
    table: &DependencyTable,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path).map_err(csv_error(csv_path))?;
    writer
        .write_record(["feature_value", "shap_value", "color_value"])
        .map_err(csv_error(csv_path))?;
    for i in 0..table.feature_values.len() {
        let color = match &table.color_values {
            Some(c) if c[i].is_finite() => format!("{}", c[i]),
            _ => String::new(),
        };
        writer
            .write_record([
                format!("{}", table.feature_values[i]),
                format!("{}", table.shap_values[i]),
                color,
            ])
            .map_err(csv_error(csv_path))?;
    }
    writer.flush().map_err(io_error(csv_path))?;
    let header = DependencyHeader {
        tau: table.tau,
        rows: table.feature_values.len(),
        has_color: table.color_values.is_some(),
    };
    std::fs::write(header_path, serde_json::to_string_pretty(&header).expect("serializes"))
        .map_err(io_error(header_path))?;
    Ok(())
}

/// `name,delta_p_mw,ramp_rate_per_min,rocop_mw_per_min,s`.
pub fn write_ramp_csv(path: &Path, table: &RampSpeedTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error(path))?;
    writer
        .write_record(["name", "delta_p_mw", "ramp_rate_per_min", "rocop_mw_per_min", "s"])
        .map_err(csv_error(path))?;
    for e in &table.entries {
        writer
            .write_record([
                e.name.clone(),
                format!("{}", e.delta_p_mw),
                format!("{}", e.ramp_rate_per_min),
                format!("{}", e.rocop_mw_per_min),
                format!("{}", e.s),
            ])
            .map_err(csv_error(path))?;
    }
    writer.flush().map_err(io_error(path))?;
    Ok(())
}

/// Mean absolute hour-to-hour change of a series, the delta-P input to
/// `ramp_speed`. NaN gaps break the chain.
pub fn mean_absolute_hourly_change(values: &[f64]) -> Result<f64> {
    let diffs: Vec<f64> = values
        .windows(2)
        .filter(|w| w[0].is_finite() && w[1].is_finite())
        .map(|w| (w[1] - w[0]).abs())
        .collect();
    if diffs.is_empty() {
        return Err(Error::InvalidInput(
            "no consecutive finite pairs to take hourly changes from".into(),
        ));
    }
    Ok(mean(&diffs))
}
