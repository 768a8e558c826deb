//! Hourly frequency-stability indicators.
//!
//! Four quantities per full hour of a 1 Hz trace: the RoCoF (least-squares
//! slope of the smoothed deviation over the first `rocof_window` seconds),
//! the nadir (signed deviation of maximal magnitude), the mean square
//! deviation, and the deviation integral. Hours whose gap fraction exceeds
//! `max_gap_fraction` are flagged invalid rather than dropped.

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{self, FrequencyTrace};
use crate::numeric;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndicatorParams {
    /// Reference frequency in Hz.
    pub f_ref: f64,
    /// Seconds from the hour boundary entering the RoCoF fit.
    pub rocof_window: usize,
    /// Full width in seconds of the centered moving average applied before
    /// the RoCoF fit. Shrinks symmetrically near the hour edges, which keeps
    /// the average exact on linear signals.
    pub smoothing_window: usize,
    /// An hour with a larger gap fraction is marked invalid.
    pub max_gap_fraction: f64,
}

impl Default for IndicatorParams {
    fn default() -> Self {
        Self {
            f_ref: 50.0,
            rocof_window: 60,
            smoothing_window: 30,
            max_gap_fraction: 0.1,
        }
    }
}

impl IndicatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.rocof_window < 2 * self.smoothing_window {
            return Err(Error::InvalidInput(format!(
                "rocof_window {} must be at least twice smoothing_window {}",
                self.rocof_window, self.smoothing_window
            )));
        }
        if !(0.0..=1.0).contains(&self.max_gap_fraction) {
            return Err(Error::InvalidInput(format!(
                "max_gap_fraction {} outside [0, 1]",
                self.max_gap_fraction
            )));
        }
        if self.rocof_window < 2 {
            return Err(Error::InvalidInput(
                "rocof_window must cover at least 2 samples".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourlyIndicators {
    pub hour: DateTime<Utc>,
    /// Hz/s; NaN when the fit window had too little data.
    pub rocof: f64,
    /// Signed deviation of maximal magnitude, Hz; earliest extremum on ties.
    pub nadir: f64,
    /// Hz².
    pub msd: f64,
    /// Hz·s, left Riemann sum at the native 1 s spacing.
    pub integral: f64,
    pub valid: bool,
}

/// Centered moving average of the deviation signal with a symmetrically
/// shrinking window: at index t the half-width is min(half, t, n-1-t), so
/// linear signals pass through exactly even at the edges. Gap samples are
/// skipped; a window with no valid sample yields NaN.
fn smoothed_deviation(samples: &[f64], gaps: &[bool], f_ref: f64, full_width: usize, upto: usize) -> Vec<f64> {
    let n = samples.len();
    let half = full_width / 2;
    (0..upto.min(n))
        .map(|t| {
            let h = half.min(t).min(n - 1 - t);
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in (t - h)..=(t + h) {
                if !gaps[i] {
                    sum += samples[i] - f_ref;
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        })
        .collect()
}

fn rocof_on(samples: &[f64], gaps: &[bool], params: &IndicatorParams) -> f64 {
    let w = params.rocof_window;
    if samples.len() < w {
        return f64::NAN;
    }
    let window_gaps = gaps[..w].iter().filter(|&&g| g).count();
    if window_gaps as f64 / w as f64 > params.max_gap_fraction {
        return f64::NAN;
    }
    let smoothed = smoothed_deviation(samples, gaps, params.f_ref, params.smoothing_window, w);
    let points: Vec<(f64, f64)> = smoothed
        .iter()
        .enumerate()
        .filter(|(_, y)| !y.is_nan())
        .map(|(t, &y)| (t as f64, y))
        .collect();
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, y) in &points {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

fn nadir_on(samples: &[f64], gaps: &[bool], f_ref: f64) -> f64 {
    let mut best = f64::NAN;
    let mut best_abs = -1.0;
    for (i, &v) in samples.iter().enumerate() {
        if gaps[i] {
            continue;
        }
        let d = v - f_ref;
        if d.abs() > best_abs {
            best_abs = d.abs();
            best = d;
        }
    }
    best
}

fn msd_on(samples: &[f64], gaps: &[bool], f_ref: f64) -> f64 {
    let devs: Vec<f64> = samples
        .iter()
        .zip(gaps)
        .filter(|(_, &g)| !g)
        .map(|(&v, _)| v - f_ref)
        .collect();
    numeric::mean_sq(&devs)
}

fn integral_on(samples: &[f64], gaps: &[bool], f_ref: f64) -> f64 {
    let devs: Vec<f64> = samples
        .iter()
        .zip(gaps)
        .filter(|(_, &g)| !g)
        .map(|(&v, _)| v - f_ref)
        .collect();
    if devs.is_empty() {
        f64::NAN
    } else {
        numeric::pairwise_sum(&devs)
    }
}

/// RoCoF at the start of the trace (the trace is taken to begin on its hour
/// boundary). NaN when the window is too gappy or too short.
pub fn compute_rocof(trace: &FrequencyTrace, params: &IndicatorParams) -> f64 {
    rocof_on(&trace.samples, &trace.gap_mask, params)
}

/// Signed deviation of maximal magnitude over the trace; earliest wins ties.
pub fn compute_nadir(trace: &FrequencyTrace, params: &IndicatorParams) -> f64 {
    nadir_on(&trace.samples, &trace.gap_mask, params.f_ref)
}

/// Mean square deviation over non-gap samples.
pub fn compute_msd(trace: &FrequencyTrace, params: &IndicatorParams) -> f64 {
    msd_on(&trace.samples, &trace.gap_mask, params.f_ref)
}

/// Deviation integral over non-gap samples, Δt = 1 s.
pub fn compute_integral(trace: &FrequencyTrace, params: &IndicatorParams) -> f64 {
    integral_on(&trace.samples, &trace.gap_mask, params.f_ref)
}

/// One record per full hour covered by the trace, starting at the first hour
/// boundary at or after the trace start. Hours are independent and computed
/// in parallel; results do not depend on the schedule.
pub fn compute_hourly_indicators(
    trace: &FrequencyTrace,
    params: &IndicatorParams,
) -> Result<Vec<HourlyIndicators>> {
    params.validate()?;
    let first_hour = {
        let fh = ingest::floor_hour(trace.start);
        if fh == trace.start {
            fh
        } else {
            fh + Duration::hours(1)
        }
    };
    let offset = (first_hour - trace.start).num_seconds() as usize;
    if trace.len() < offset + 3600 {
        return Err(Error::InvalidInput(format!(
            "trace for {} spans less than one full hour",
            trace.area_id
        )));
    }
    let n_hours = (trace.len() - offset) / 3600;
    Ok((0..n_hours)
        .into_par_iter()
        .map(|h| {
            let lo = offset + h * 3600;
            let hi = lo + 3600;
            let samples = &trace.samples[lo..hi];
            let gaps = &trace.gap_mask[lo..hi];
            let gap_fraction =
                gaps.iter().filter(|&&g| g).count() as f64 / 3600.0;
            HourlyIndicators {
                hour: first_hour + Duration::hours(h as i64),
                rocof: rocof_on(samples, gaps, params),
                nadir: nadir_on(samples, gaps, params.f_ref),
                msd: msd_on(samples, gaps, params.f_ref),
                integral: integral_on(samples, gaps, params.f_ref),
                valid: gap_fraction <= params.max_gap_fraction,
            }
        })
        .collect())
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Write `hour,area,rocof_hz_per_s,nadir_hz,msd_hz2,integral_hz_s,valid`;
/// NaN indicators become empty fields.
pub fn write_indicator_csv(area: &str, records: &[HourlyIndicators], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    writer
        .write_record([
            "hour",
            "area",
            "rocof_hz_per_s",
            "nadir_hz",
            "msd_hz2",
            "integral_hz_s",
            "valid",
        ])
        .map_err(wrap)?;
    for r in records {
        writer
            .write_record([
                ingest::format_utc(r.hour),
                area.to_string(),
                fmt_opt(r.rocof),
                fmt_opt(r.nadir),
                fmt_opt(r.msd),
                fmt_opt(r.integral),
                r.valid.to_string(),
            ])
            .map_err(wrap)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Read back an indicator CSV written by [`write_indicator_csv`].
pub fn read_indicator_csv(path: &Path) -> Result<(String, Vec<HourlyIndicators>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut area = String::new();
    let mut records = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_field = |s: &str| -> f64 {
            if s.is_empty() {
                f64::NAN
            } else {
                s.parse().unwrap_or(f64::NAN)
            }
        };
        let hour = ingest::parse_utc(&record[0]).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            message: format!("bad hour: {e}"),
        })?;
        area = record[1].to_string();
        records.push(HourlyIndicators {
            hour,
            rocof: parse_field(&record[2]),
            nadir: parse_field(&record[3]),
            msd: parse_field(&record[4]),
            integral: parse_field(&record[5]),
            valid: &record[6] == "true",
        });
    }
    Ok((area, records))
}
