//! Parsing of raw measurement exports into validated in-memory tables.
//!
//! Three file shapes are understood: 1 Hz frequency recordings
//! (`timestamp,frequency_hz`), generic tabular series at a fixed sub-hourly
//! resolution (`timestamp,value`), and transmission outage calendars
//! (`link_id,start,end`). All timestamps are UTC; parsing is pure per file
//! and the resulting tables are immutable.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::numeric;

/// Frequency samples outside this band are treated as recorder glitches and
/// masked as gaps.
pub const PLAUSIBLE_MIN_HZ: f64 = 45.0;
pub const PLAUSIBLE_MAX_HZ: f64 = 55.0;

/// Timestamp format used in every CSV artifact.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_utc(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_utc(s: &str) -> std::result::Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
}

/// Truncate to the start of the hour.
pub fn floor_hour(ts: DateTime<Utc>) -> DateTime<Utc> {
    let secs = ts.timestamp();
    Utc.timestamp_opt(secs - secs.rem_euclid(3600), 0).unwrap()
}

/// 1 Hz frequency recording for one synchronous area. `samples[i]` holds the
/// value at `start + i` seconds; gap positions hold NaN and are flagged in
/// `gap_mask`.
#[derive(Debug, Clone)]
pub struct FrequencyTrace {
    pub area_id: String,
    pub start: DateTime<Utc>,
    pub samples: Vec<f64>,
    pub gap_mask: Vec<bool>,
}

impl FrequencyTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn gap_count(&self) -> usize {
        self.gap_mask.iter().filter(|&&g| g).count()
    }
}

/// One named series for one bidding zone at a fixed resolution. Rows form a
/// complete grid from the first to the last timestamp; absent or unparseable
/// source rows appear as NaN.
#[derive(Debug, Clone)]
pub struct TabularSeries {
    pub name: String,
    pub zone_id: String,
    pub resolution_minutes: u32,
    pub rows: Vec<(DateTime<Utc>, f64)>,
}

impl TabularSeries {
    pub fn value_at(&self, ts: DateTime<Utc>) -> Option<f64> {
        let first = self.rows.first()?.0;
        let step = i64::from(self.resolution_minutes) * 60;
        let offset = (ts - first).num_seconds();
        if offset < 0 || offset % step != 0 {
            return None;
        }
        self.rows.get((offset / step) as usize).map(|&(_, v)| v)
    }
}

/// Unavailability intervals for one transmission link.
#[derive(Debug, Clone)]
pub struct OutageCalendar {
    pub link_id: String,
    pub intervals: Vec<(DateTime<Utc>, DateTime<Utc>)>,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_row_timestamp(path: &Path, row: usize, raw: &str) -> Result<DateTime<Utc>> {
    parse_utc(raw.trim()).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("bad timestamp {:?}: {e}", raw),
    })
}

/// Parse a 1 Hz frequency recording. Rows that are absent, non-numeric, or
/// outside the plausibility band become gaps; the sample grid always spans
/// first to last parsed timestamp at exactly one second.
pub fn parse_frequency_csv(path: &Path, area_id: &str) -> Result<FrequencyTrace> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["timestamp", "frequency_hz"])?;

    let mut parsed: Vec<(DateTime<Utc>, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let ts = parse_row_timestamp(path, row, &record[0])?;
        if let Some(&(prev, _)) = parsed.last() {
            if ts <= prev {
                return Err(Error::NonMonotoneTimestamps {
                    path: path.to_path_buf(),
                    row,
                    timestamp: format_utc(ts),
                });
            }
        }
        let value = record[1].trim().parse::<f64>().unwrap_or(f64::NAN);
        parsed.push((ts, value));
    }
    if parsed.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }

    let start = parsed[0].0;
    let span = (parsed[parsed.len() - 1].0 - start).num_seconds() as usize + 1;
    let mut samples = vec![f64::NAN; span];
    let mut gap_mask = vec![true; span];
    for (ts, value) in parsed {
        let offset = (ts - start).num_seconds() as usize;
        if value.is_finite() && (PLAUSIBLE_MIN_HZ..=PLAUSIBLE_MAX_HZ).contains(&value) {
            samples[offset] = value;
            gap_mask[offset] = false;
        }
    }
    Ok(FrequencyTrace {
        area_id: area_id.to_string(),
        start,
        samples,
        gap_mask,
    })
}

/// Serialize a trace back to the frequency CSV shape, one row per second,
/// empty value for gaps. Non-gap values round-trip bit-exactly.
pub fn write_frequency_csv(trace: &FrequencyTrace, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["timestamp", "frequency_hz"])
        .map_err(|e| csv_error(path, e))?;
    for (i, (&v, &gap)) in trace.samples.iter().zip(&trace.gap_mask).enumerate() {
        let ts = trace.start + Duration::seconds(i as i64);
        let value = if gap { String::new() } else { format!("{v}") };
        writer
            .write_record([format_utc(ts), value])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parse a `timestamp,value` export. The resolution is taken from
/// `declared_resolution` when given, otherwise inferred as the GCD of the
/// row spacings; either way every spacing must be a whole multiple of it and
/// it must divide 60. Missing grid rows become NaN after alignment.
pub fn parse_tabular_csv(
    path: &Path,
    name: &str,
    zone_id: &str,
    declared_resolution: Option<u32>,
) -> Result<TabularSeries> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["timestamp", "value"])?;

    let mut parsed: Vec<(DateTime<Utc>, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let ts = parse_row_timestamp(path, row, &record[0])?;
        if let Some(&(prev, _)) = parsed.last() {
            if ts == prev {
                return Err(Error::DuplicateTimestamp {
                    path: path.to_path_buf(),
                    row,
                    timestamp: format_utc(ts),
                });
            }
            if ts < prev {
                return Err(Error::NonMonotoneTimestamps {
                    path: path.to_path_buf(),
                    row,
                    timestamp: format_utc(ts),
                });
            }
        }
        let value = record[1].trim().parse::<f64>().unwrap_or(f64::NAN);
        parsed.push((ts, value));
    }
    if parsed.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }

    let deltas: Vec<i64> = parsed
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).num_seconds())
        .collect();
    for (i, &d) in deltas.iter().enumerate() {
        if d % 60 != 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                message: format!("row spacing of {d} s is not minute-aligned"),
            });
        }
    }

    let resolution_minutes = match declared_resolution {
        Some(r) => r,
        None => {
            let g = deltas.iter().fold(0, |acc, &d| gcd(acc, d / 60));
            if g == 0 {
                return Err(Error::InvalidInput(format!(
                    "series {name}: cannot infer resolution from a single row; declare it"
                )));
            }
            u32::try_from(g).expect("positive spacing")
        }
    };
    if resolution_minutes == 0 || 60 % resolution_minutes != 0 {
        return Err(Error::InvalidInput(format!(
            "series {name}: resolution {resolution_minutes} min does not divide 60"
        )));
    }
    let step = i64::from(resolution_minutes);
    for &d in &deltas {
        if (d / 60) % step != 0 {
            return Err(Error::InconsistentResolution {
                name: name.to_string(),
                gap_minutes: d / 60,
                resolution_minutes,
            });
        }
    }

    let first = parsed[0].0;
    let last = parsed[parsed.len() - 1].0;
    let slots = ((last - first).num_seconds() / (step * 60)) as usize + 1;
    let mut rows: Vec<(DateTime<Utc>, f64)> = (0..slots)
        .map(|i| (first + Duration::minutes(step * i as i64), f64::NAN))
        .collect();
    for (ts, value) in parsed {
        let idx = ((ts - first).num_seconds() / (step * 60)) as usize;
        rows[idx].1 = value;
    }
    Ok(TabularSeries {
        name: name.to_string(),
        zone_id: zone_id.to_string(),
        resolution_minutes,
        rows,
    })
}

/// Downsample to hourly resolution by in-hour arithmetic means. An hour is
/// missing when any of its constituent sub-hour values is missing (including
/// slots before the series start or after its end). Hourly input is returned
/// unchanged.
pub fn resample_hourly(series: &TabularSeries) -> TabularSeries {
    assert!(
        series.resolution_minutes <= 60,
        "resample_hourly requires sub-hourly input"
    );
    if series.resolution_minutes == 60 {
        return series.clone();
    }
    if series.rows.is_empty() {
        return TabularSeries {
            resolution_minutes: 60,
            ..series.clone()
        };
    }
    let slots_per_hour = (60 / series.resolution_minutes) as usize;
    let first_hour = floor_hour(series.rows[0].0);
    let last_hour = floor_hour(series.rows[series.rows.len() - 1].0);
    let hours = ((last_hour - first_hour).num_seconds() / 3600) as usize + 1;

    let mut buckets: Vec<Vec<f64>> = vec![Vec::with_capacity(slots_per_hour); hours];
    for &(ts, v) in &series.rows {
        let h = ((floor_hour(ts) - first_hour).num_seconds() / 3600) as usize;
        buckets[h].push(v);
    }
    let rows = buckets
        .into_iter()
        .enumerate()
        .map(|(h, values)| {
            let ts = first_hour + Duration::hours(h as i64);
            let complete =
                values.len() == slots_per_hour && values.iter().all(|v| !v.is_nan());
            let v = if complete { numeric::mean(&values) } else { f64::NAN };
            (ts, v)
        })
        .collect();
    TabularSeries {
        name: series.name.clone(),
        zone_id: series.zone_id.clone(),
        resolution_minutes: 60,
        rows,
    }
}

/// Parse an outage export, grouping rows by link in first-appearance order.
pub fn parse_outage_csv(path: &Path) -> Result<Vec<OutageCalendar>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, &["link_id", "start", "end"])?;

    let mut by_link: IndexMap<String, Vec<(DateTime<Utc>, DateTime<Utc>)>> = IndexMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        let start = parse_row_timestamp(path, row, &record[1])?;
        let end = parse_row_timestamp(path, row, &record[2])?;
        if start >= end {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!(
                    "interval start {} is not before end {}",
                    format_utc(start),
                    format_utc(end)
                ),
            });
        }
        by_link.entry(record[0].trim().to_string()).or_default().push((start, end));
    }
    Ok(by_link
        .into_iter()
        .map(|(link_id, intervals)| OutageCalendar { link_id, intervals })
        .collect())
}

/// Write a `timestamp,value` CSV; NaN becomes the empty field.
pub fn write_tabular_csv(series: &TabularSeries, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["timestamp", "value"])
        .map_err(|e| csv_error(path, e))?;
    for &(ts, v) in &series.rows {
        let value = if v.is_nan() { String::new() } else { format!("{v}") };
        writer
            .write_record([format_utc(ts), value])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn file_stem_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}.{ext}"))
}
