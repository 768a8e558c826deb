//! Assembly of the two hourly model datasets: the area-aggregated stability
//! dataset (features → four indicator targets) and the link-resolved flow
//! dataset (terminal features → unscheduled flow target).
//!
//! All transforms are pure. Hour axes are explicit everywhere; a value is
//! missing (NaN) rather than silently absent, and rows only disappear at the
//! final assembly or exclusion steps.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::HourlyIndicators;
use crate::ingest::{self, OutageCalendar, TabularSeries};

pub const INDICATOR_NAMES: [&str; 4] = ["rocof", "nadir", "msd", "integral"];

pub fn indicator_unit(name: &str) -> &'static str {
    match name {
        "rocof" => "Hz/s",
        "nadir" => "Hz",
        "msd" => "Hz^2",
        "integral" => "Hz*s",
        _ => "",
    }
}

/// How zone series combine into an area series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    /// Physically additive quantities (power).
    Sum,
    /// Intensive quantities (prices).
    Mean,
}

/// Orientation of the unscheduled flow definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    #[default]
    ScheduledMinusPhysical,
    PhysicalMinusScheduled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub values: Vec<f64>,
    pub unit: String,
    /// Source series and transform, e.g. "ramp(aggregate(load_actual))".
    pub provenance: String,
}

/// Hour-indexed table of named numeric columns. NaN marks missing values.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub hours: Vec<DateTime<Utc>>,
    pub columns: IndexMap<String, FeatureColumn>,
}

/// A series destined for a feature table, with its metadata.
#[derive(Debug, Clone)]
pub struct FeatureSeries {
    pub series: TabularSeries,
    pub unit: String,
    pub provenance: String,
}

impl FeatureTable {
    pub fn new(hours: Vec<DateTime<Utc>>) -> Self {
        Self {
            hours,
            columns: IndexMap::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.hours.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn insert_column(
        &mut self,
        name: &str,
        unit: &str,
        provenance: &str,
        values: Vec<f64>,
    ) -> Result<()> {
        if values.len() != self.hours.len() {
            return Err(Error::InvalidInput(format!(
                "column {name}: {} values for {} hours",
                values.len(),
                self.hours.len()
            )));
        }
        if self.columns.contains_key(name) {
            return Err(Error::InvalidInput(format!("duplicate column name {name}")));
        }
        self.columns.insert(
            name.to_string(),
            FeatureColumn {
                values,
                unit: unit.to_string(),
                provenance: provenance.to_string(),
            },
        );
        Ok(())
    }

    /// Union of the input hour axes; each column takes the series value at
    /// the hour, NaN where the series has no row.
    pub fn from_series(inputs: &[FeatureSeries]) -> Result<Self> {
        for f in inputs {
            if f.series.resolution_minutes != 60 {
                return Err(Error::InvalidInput(format!(
                    "feature series {} is not hourly",
                    f.series.name
                )));
            }
        }
        let mut hour_set: Vec<DateTime<Utc>> = inputs
            .iter()
            .flat_map(|f| f.series.rows.iter().map(|&(h, _)| h))
            .collect();
        hour_set.sort_unstable();
        hour_set.dedup();
        let mut table = FeatureTable::new(hour_set);
        for f in inputs {
            let values: Vec<f64> = table
                .hours
                .iter()
                .map(|&h| f.series.value_at(h).unwrap_or(f64::NAN))
                .collect();
            table.insert_column(&f.series.name, &f.unit, &f.provenance, values)?;
        }
        Ok(table)
    }

    /// Keep only the rows at the given (sorted, deduplicated) indices.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let hours = indices.iter().map(|&i| self.hours[i]).collect();
        let columns = self
            .columns
            .iter()
            .map(|(name, col)| {
                (
                    name.clone(),
                    FeatureColumn {
                        values: indices.iter().map(|&i| col.values[i]).collect(),
                        unit: col.unit.clone(),
                        provenance: col.provenance.clone(),
                    },
                )
            })
            .collect();
        Self { hours, columns }
    }

    /// Row-major matrix in column insertion order.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|i| self.columns.values().map(|c| c.values[i]).collect())
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.keys().cloned().collect()
    }
}

/// Scheduled, physical, and unscheduled flow between two synchronous areas.
/// Positive values are outflows from `from_area`. All three series share one
/// hourly axis.
#[derive(Debug, Clone)]
pub struct BorderFlowSet {
    pub from_area: String,
    pub to_area: String,
    pub scheduled: TabularSeries,
    pub physical: TabularSeries,
    pub unscheduled: TabularSeries,
}

fn union_hours(series: &[&TabularSeries]) -> Vec<DateTime<Utc>> {
    let mut hours: Vec<DateTime<Utc>> = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|&(h, _)| h))
        .collect();
    hours.sort_unstable();
    hours.dedup();
    hours
}

fn regrid(series: &TabularSeries, hours: &[DateTime<Utc>]) -> TabularSeries {
    TabularSeries {
        name: series.name.clone(),
        zone_id: series.zone_id.clone(),
        resolution_minutes: 60,
        rows: hours
            .iter()
            .map(|&h| (h, series.value_at(h).unwrap_or(f64::NAN)))
            .collect(),
    }
}

impl BorderFlowSet {
    /// Derive the unscheduled component from scheduled and physical flows.
    /// Both inputs must be hourly and oriented positive-out-of-`from_area`.
    pub fn derive(
        from_area: &str,
        to_area: &str,
        scheduled: &TabularSeries,
        physical: &TabularSeries,
        sign: SignConvention,
    ) -> Result<Self> {
        if scheduled.resolution_minutes != 60 || physical.resolution_minutes != 60 {
            return Err(Error::InvalidInput(format!(
                "border {from_area}->{to_area}: flows must be hourly"
            )));
        }
        let hours = union_hours(&[scheduled, physical]);
        let scheduled = regrid(scheduled, &hours);
        let physical = regrid(physical, &hours);
        let rows = scheduled
            .rows
            .iter()
            .zip(&physical.rows)
            .map(|(&(h, s), &(_, p))| {
                let v = match sign {
                    SignConvention::ScheduledMinusPhysical => s - p,
                    SignConvention::PhysicalMinusScheduled => p - s,
                };
                (h, v)
            })
            .collect();
        let unscheduled = TabularSeries {
            name: format!("unscheduled_{from_area}_{to_area}"),
            zone_id: from_area.to_string(),
            resolution_minutes: 60,
            rows,
        };
        Ok(Self {
            from_area: from_area.to_string(),
            to_area: to_area.to_string(),
            scheduled,
            physical,
            unscheduled,
        })
    }
}

/// Hourly difference, value(t) − value(t−1); the first hour (and any hour
/// whose predecessor is missing) is missing. Output name gains "_ramp".
pub fn ramp(series: &TabularSeries) -> TabularSeries {
    assert_eq!(series.resolution_minutes, 60, "ramp requires hourly input");
    let rows = series
        .rows
        .iter()
        .enumerate()
        .map(|(i, &(h, v))| {
            if i == 0 {
                return (h, f64::NAN);
            }
            let (prev_h, prev_v) = series.rows[i - 1];
            if h - prev_h == Duration::hours(1) {
                (h, v - prev_v)
            } else {
                (h, f64::NAN)
            }
        })
        .collect();
    TabularSeries {
        name: format!("{}_ramp", series.name),
        zone_id: series.zone_id.clone(),
        resolution_minutes: 60,
        rows,
    }
}

/// Day-ahead minus actual on the intersection of their hour axes.
pub fn forecast_error(day_ahead: &TabularSeries, actual: &TabularSeries) -> TabularSeries {
    assert_eq!(day_ahead.resolution_minutes, 60);
    assert_eq!(actual.resolution_minutes, 60);
    let actual_hours: BTreeMap<DateTime<Utc>, f64> = actual.rows.iter().copied().collect();
    let rows = day_ahead
        .rows
        .iter()
        .filter_map(|&(h, da)| actual_hours.get(&h).map(|&a| (h, da - a)))
        .collect();
    TabularSeries {
        name: format!("{}_error", day_ahead.name),
        zone_id: actual.zone_id.clone(),
        resolution_minutes: 60,
        rows,
    }
}

/// Per-hour aggregate over the zones of one area: sums for power, means for
/// prices. An hour is missing when any member zone is missing it.
pub fn aggregate_area(
    series: &[&TabularSeries],
    area_id: &str,
    rule: AggregationRule,
) -> Result<TabularSeries> {
    if series.is_empty() {
        return Err(Error::InvalidInput(format!(
            "area {area_id}: no zone series to aggregate"
        )));
    }
    let name = series[0].name.clone();
    for s in series {
        if s.name != name {
            return Err(Error::InvalidInput(format!(
                "area {area_id}: mixed quantities {} and {}",
                name, s.name
            )));
        }
        if s.resolution_minutes != 60 {
            return Err(Error::InvalidInput(format!(
                "area {area_id}: series {} for zone {} is not hourly",
                s.name, s.zone_id
            )));
        }
    }
    let hours = union_hours(series);
    let rows = hours
        .iter()
        .map(|&h| {
            let mut sum = 0.0;
            for s in series {
                sum += s.value_at(h).unwrap_or(f64::NAN);
            }
            let v = match rule {
                AggregationRule::Sum => sum,
                AggregationRule::Mean => sum / series.len() as f64,
            };
            (h, v)
        })
        .collect();
    Ok(TabularSeries {
        name,
        zone_id: area_id.to_string(),
        resolution_minutes: 60,
        rows,
    })
}

/// Weighted sum of scheduled generation over synchronous types. Types with
/// no weight entry count as zero weight; zero-weight members cannot poison
/// an hour.
pub fn inertia_proxy(
    by_type: &[&TabularSeries],
    weights: &BTreeMap<String, f64>,
) -> Result<TabularSeries> {
    if by_type.is_empty() {
        return Err(Error::InvalidInput("inertia proxy: no generation series".into()));
    }
    for s in by_type {
        if s.resolution_minutes != 60 {
            return Err(Error::InvalidInput(format!(
                "inertia proxy: series {} is not hourly",
                s.name
            )));
        }
    }
    let hours = union_hours(by_type);
    let rows = hours
        .iter()
        .map(|&h| {
            let mut sum = 0.0;
            for s in by_type {
                let w = weights.get(&s.name).copied().unwrap_or(0.0);
                if w != 0.0 {
                    sum += w * s.value_at(h).unwrap_or(f64::NAN);
                }
            }
            (h, sum)
        })
        .collect();
    Ok(TabularSeries {
        name: "inertia_proxy".into(),
        zone_id: by_type[0].zone_id.clone(),
        resolution_minutes: 60,
        rows,
    })
}

/// Net flow into `area` from `neighbor`, summed over every border between
/// the two, for all three components. The result is oriented with
/// `from_area = neighbor`, so positive values are inflows into `area`.
pub fn net_area_inflow(
    flows: &[BorderFlowSet],
    area: &str,
    neighbor: &str,
) -> Result<BorderFlowSet> {
    let relevant: Vec<(&BorderFlowSet, f64)> = flows
        .iter()
        .filter_map(|f| {
            if f.from_area == neighbor && f.to_area == area {
                Some((f, 1.0))
            } else if f.from_area == area && f.to_area == neighbor {
                Some((f, -1.0))
            } else {
                None
            }
        })
        .collect();
    if relevant.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no borders between {area} and {neighbor}"
        )));
    }
    let component = |pick: fn(&BorderFlowSet) -> &TabularSeries, name: String| {
        let series: Vec<&TabularSeries> = relevant.iter().map(|&(f, _)| pick(f)).collect();
        let hours = union_hours(&series);
        let rows: Vec<(DateTime<Utc>, f64)> = hours
            .iter()
            .map(|&h| {
                let mut sum = 0.0;
                for &(f, orient) in &relevant {
                    sum += orient * pick(f).value_at(h).unwrap_or(f64::NAN);
                }
                (h, sum)
            })
            .collect();
        TabularSeries {
            name,
            zone_id: area.to_string(),
            resolution_minutes: 60,
            rows,
        }
    };
    Ok(BorderFlowSet {
        from_area: neighbor.to_string(),
        to_area: area.to_string(),
        scheduled: component(|f| &f.scheduled, format!("net_inflow_{neighbor}_scheduled")),
        physical: component(|f| &f.physical, format!("net_inflow_{neighbor}_physical")),
        unscheduled: component(|f| &f.unscheduled, format!("net_inflow_{neighbor}_unscheduled")),
    })
}

/// Area-level dataset: joined features plus the four indicator targets.
/// A NaN target value means that row is absent for that target only.
#[derive(Debug, Clone)]
pub struct StabilityDataset {
    pub area_id: String,
    pub features: FeatureTable,
    pub targets: IndexMap<String, Vec<f64>>,
}

impl StabilityDataset {
    /// Hours, feature matrix, and target vector for one indicator, with the
    /// NaN-target rows dropped.
    pub fn rows_for_target(&self, target: &str) -> Result<(Vec<DateTime<Utc>>, Vec<Vec<f64>>, Vec<f64>)> {
        let values = self
            .targets
            .get(target)
            .ok_or_else(|| Error::InvalidInput(format!("unknown target {target}")))?;
        let keep: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(i, _)| i)
            .collect();
        let table = self.features.select_rows(&keep);
        let targets = keep.iter().map(|&i| values[i]).collect();
        Ok((table.hours.clone(), table.to_rows(), targets))
    }
}

/// Inner join of the feature table with the indicator records. Invalid
/// indicator hours yield NaN targets; missing feature values stay NaN for
/// the learner to route.
pub fn assemble_stability_dataset(
    area_id: &str,
    indicators: &[HourlyIndicators],
    features: &FeatureTable,
) -> StabilityDataset {
    let by_hour: BTreeMap<DateTime<Utc>, &HourlyIndicators> =
        indicators.iter().map(|r| (r.hour, r)).collect();
    let keep: Vec<usize> = features
        .hours
        .iter()
        .enumerate()
        .filter(|(_, h)| by_hour.contains_key(h))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        log::warn!(
            "stability dataset for {area_id}: indicator hours and feature hours are disjoint; dataset is empty"
        );
    }
    let features = features.select_rows(&keep);
    let mut targets = IndexMap::new();
    for name in INDICATOR_NAMES {
        let values: Vec<f64> = features
            .hours
            .iter()
            .map(|h| {
                let r = by_hour[h];
                let v = match name {
                    "rocof" => r.rocof,
                    "nadir" => r.nadir,
                    "msd" => r.msd,
                    "integral" => r.integral,
                    _ => unreachable!(),
                };
                if r.valid {
                    v
                } else {
                    f64::NAN
                }
            })
            .collect();
        targets.insert(name.to_string(), values);
    }
    StabilityDataset {
        area_id: area_id.to_string(),
        features,
        targets,
    }
}

/// Link-level dataset: terminal features plus scheduled exchange against the
/// unscheduled-flow target. Hours excluded for unavailability are listed
/// with their reason and never appear in the feature table.
#[derive(Debug, Clone)]
pub struct LinkDataset {
    pub link_id: String,
    pub features: FeatureTable,
    pub target_name: String,
    /// Aligned with `features.hours`.
    pub target: Vec<f64>,
    pub excluded_hours: BTreeMap<DateTime<Utc>, String>,
}

/// One terminal side of a link. `indicators` is None for areas whose
/// frequency data is unavailable.
pub struct TerminalSide<'a> {
    pub area_id: &'a str,
    pub features: &'a FeatureTable,
    pub indicators: Option<&'a [HourlyIndicators]>,
}

pub fn assemble_flow_dataset(
    link_id: &str,
    terminals: &[TerminalSide],
    scheduled_exchange: &TabularSeries,
    unscheduled: &TabularSeries,
) -> Result<LinkDataset> {
    if terminals.is_empty() {
        return Err(Error::InvalidInput(format!("link {link_id}: no terminal sides")));
    }
    let hours: Vec<DateTime<Utc>> = unscheduled
        .rows
        .iter()
        .filter(|(_, v)| !v.is_nan())
        .map(|&(h, _)| h)
        .collect();
    let mut table = FeatureTable::new(hours);
    table.insert_column(
        "scheduled_exchange",
        "MW",
        &format!("link {link_id} scheduled commercial exchange"),
        table
            .hours
            .iter()
            .map(|&h| scheduled_exchange.value_at(h).unwrap_or(f64::NAN))
            .collect(),
    )?;
    for side in terminals {
        for (name, col) in &side.features.columns {
            let lookup: BTreeMap<DateTime<Utc>, f64> = side
                .features
                .hours
                .iter()
                .copied()
                .zip(col.values.iter().copied())
                .collect();
            let values = table
                .hours
                .iter()
                .map(|h| lookup.get(h).copied().unwrap_or(f64::NAN))
                .collect();
            table.insert_column(
                &format!("{}__{}", side.area_id, name),
                &col.unit,
                &format!("{} at terminal {}", col.provenance, side.area_id),
                values,
            )?;
        }
        if let Some(indicators) = side.indicators {
            let by_hour: BTreeMap<DateTime<Utc>, &HourlyIndicators> =
                indicators.iter().map(|r| (r.hour, r)).collect();
            for name in INDICATOR_NAMES {
                let values = table
                    .hours
                    .iter()
                    .map(|h| match by_hour.get(h) {
                        Some(r) if r.valid => match name {
                            "rocof" => r.rocof,
                            "nadir" => r.nadir,
                            "msd" => r.msd,
                            "integral" => r.integral,
                            _ => unreachable!(),
                        },
                        _ => f64::NAN,
                    })
                    .collect();
                table.insert_column(
                    &format!("{}__{}", side.area_id, name),
                    indicator_unit(name),
                    &format!("hourly {} indicator of area {}", name, side.area_id),
                    values,
                )?;
            }
        }
    }
    let target = table
        .hours
        .iter()
        .map(|&h| unscheduled.value_at(h).unwrap_or(f64::NAN))
        .collect();
    Ok(LinkDataset {
        link_id: link_id.to_string(),
        features: table,
        target_name: unscheduled.name.clone(),
        target,
        excluded_hours: BTreeMap::new(),
    })
}

/// A listing too long to auto-exclude, surfaced for manual review.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusionReview {
    pub link_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub duration_hours: i64,
}

/// Remove hours overlapping unavailability listings shorter than
/// `max_listing`; longer listings are reported, not excluded.
pub fn mask_unavailability(
    dataset: &LinkDataset,
    calendar: &OutageCalendar,
    max_listing: Duration,
) -> Result<(LinkDataset, Vec<ExclusionReview>)> {
    if calendar.link_id != dataset.link_id {
        return Err(Error::InvalidInput(format!(
            "calendar is for link {}, dataset is for link {}",
            calendar.link_id, dataset.link_id
        )));
    }
    let mut reviews = Vec::new();
    let mut excluded = dataset.excluded_hours.clone();
    let mut keep_mask = vec![true; dataset.features.n_rows()];
    for &(start, end) in &calendar.intervals {
        if end - start >= max_listing {
            reviews.push(ExclusionReview {
                link_id: dataset.link_id.clone(),
                start,
                end,
                duration_hours: (end - start).num_hours(),
            });
            continue;
        }
        for (i, &h) in dataset.features.hours.iter().enumerate() {
            if h < end && h + Duration::hours(1) > start {
                keep_mask[i] = false;
                excluded.entry(h).or_insert_with(|| {
                    format!(
                        "unavailability {}..{}",
                        ingest::format_utc(start),
                        ingest::format_utc(end)
                    )
                });
            }
        }
    }
    let keep: Vec<usize> = keep_mask
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| i)
        .collect();
    let masked = LinkDataset {
        link_id: dataset.link_id.clone(),
        features: dataset.features.select_rows(&keep),
        target_name: dataset.target_name.clone(),
        target: keep.iter().map(|&i| dataset.target[i]).collect(),
        excluded_hours: excluded,
    };
    Ok((masked, reviews))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub unit: String,
    pub provenance: String,
    /// "feature" or "target".
    pub role: String,
}

/// Sidecar schema stored next to every persisted dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSchema {
    pub table: String,
    pub columns: Vec<ColumnSchema>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded_hours: BTreeMap<String, String>,
}

fn fmt_opt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn write_table_csv(
    path: &Path,
    hours: &[DateTime<Utc>],
    named_columns: &[(&str, &[f64])],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut header = vec!["hour".to_string()];
    header.extend(named_columns.iter().map(|(n, _)| n.to_string()));
    writer.write_record(&header).map_err(wrap)?;
    for (i, &h) in hours.iter().enumerate() {
        let mut record = vec![ingest::format_utc(h)];
        record.extend(named_columns.iter().map(|(_, v)| fmt_opt(v[i])));
        writer.write_record(&record).map_err(wrap)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn write_schema(path: &Path, schema: &TableSchema) -> Result<()> {
    let json = serde_json::to_string_pretty(schema).expect("schema serializes");
    std::fs::write(path, json).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_schema(path: &Path) -> Result<TableSchema> {
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        message: format!("bad schema JSON: {e}"),
    })
}

/// Persist a stability dataset as CSV plus sidecar schema. Target columns
/// are prefixed "target_".
pub fn write_stability_dataset(ds: &StabilityDataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let mut cols: Vec<(&str, &[f64])> = Vec::new();
    let mut schema_cols = Vec::new();
    for (name, col) in &ds.features.columns {
        cols.push((name.as_str(), col.values.as_slice()));
        schema_cols.push(ColumnSchema {
            name: name.clone(),
            unit: col.unit.clone(),
            provenance: col.provenance.clone(),
            role: "feature".into(),
        });
    }
    let target_names: Vec<String> = ds.targets.keys().map(|n| format!("target_{n}")).collect();
    for ((name, values), pretty) in ds.targets.iter().zip(&target_names) {
        cols.push((pretty.as_str(), values.as_slice()));
        schema_cols.push(ColumnSchema {
            name: pretty.clone(),
            unit: indicator_unit(name).into(),
            provenance: format!("hourly {name} indicator of area {}", ds.area_id),
            role: "target".into(),
        });
    }
    write_table_csv(csv_path, &ds.features.hours, &cols)?;
    write_schema(
        schema_path,
        &TableSchema {
            table: format!("stability:{}", ds.area_id),
            columns: schema_cols,
            excluded_hours: BTreeMap::new(),
        },
    )
}

/// Persist a flow dataset as CSV plus sidecar schema carrying the excluded
/// hours and their reasons.
pub fn write_flow_dataset(ds: &LinkDataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let mut cols: Vec<(&str, &[f64])> = Vec::new();
    let mut schema_cols = Vec::new();
    for (name, col) in &ds.features.columns {
        cols.push((name.as_str(), col.values.as_slice()));
        schema_cols.push(ColumnSchema {
            name: name.clone(),
            unit: col.unit.clone(),
            provenance: col.provenance.clone(),
            role: "feature".into(),
        });
    }
    cols.push(("target", ds.target.as_slice()));
    schema_cols.push(ColumnSchema {
        name: "target".into(),
        unit: "MW".into(),
        provenance: ds.target_name.clone(),
        role: "target".into(),
    });
    write_table_csv(csv_path, &ds.features.hours, &cols)?;
    write_schema(
        schema_path,
        &TableSchema {
            table: format!("flow:{}", ds.link_id),
            columns: schema_cols,
            excluded_hours: ds
                .excluded_hours
                .iter()
                .map(|(h, r)| (ingest::format_utc(*h), r.clone()))
                .collect(),
        },
    )
}

fn read_table_csv(path: &Path) -> Result<(Vec<DateTime<Utc>>, Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let mut hours = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        hours.push(ingest::parse_utc(&record[0]).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            message: format!("bad hour: {e}"),
        })?);
        for (c, field) in record.iter().skip(1).enumerate() {
            let v = if field.is_empty() {
                f64::NAN
            } else {
                field.parse().unwrap_or(f64::NAN)
            };
            columns[c].push(v);
        }
    }
    Ok((hours, header, columns))
}

/// Load a dataset written by [`write_stability_dataset`].
pub fn read_stability_dataset(csv_path: &Path, schema_path: &Path) -> Result<StabilityDataset> {
    let schema = read_schema(schema_path)?;
    let (hours, header, columns) = read_table_csv(csv_path)?;
    let area_id = schema
        .table
        .strip_prefix("stability:")
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a stability dataset", schema.table)))?
        .to_string();
    let mut features = FeatureTable::new(hours);
    let mut targets = IndexMap::new();
    for (name, values) in header.iter().zip(columns) {
        let meta = schema
            .columns
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("column {name} missing from schema")))?;
        if meta.role == "target" {
            let short = name.strip_prefix("target_").unwrap_or(name);
            targets.insert(short.to_string(), values);
        } else {
            features.insert_column(name, &meta.unit, &meta.provenance, values)?;
        }
    }
    Ok(StabilityDataset {
        area_id,
        features,
        targets,
    })
}

/// Load a dataset written by [`write_flow_dataset`].
pub fn read_flow_dataset(csv_path: &Path, schema_path: &Path) -> Result<LinkDataset> {
    let schema = read_schema(schema_path)?;
    let (hours, header, columns) = read_table_csv(csv_path)?;
    let link_id = schema
        .table
        .strip_prefix("flow:")
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a flow dataset", schema.table)))?
        .to_string();
    let mut features = FeatureTable::new(hours);
    let mut target = Vec::new();
    let mut target_name = String::new();
    for (name, values) in header.iter().zip(columns) {
        let meta = schema
            .columns
            .iter()
            .find(|c| &c.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("column {name} missing from schema")))?;
        if meta.role == "target" {
            target = values;
            target_name = meta.provenance.clone();
        } else {
            features.insert_column(name, &meta.unit, &meta.provenance, values)?;
        }
    }
    let mut excluded_hours = BTreeMap::new();
    for (h, reason) in schema.excluded_hours {
        let ts = ingest::parse_utc(&h).map_err(|e| Error::Parse {
            path: schema_path.to_path_buf(),
            row: 0,
            message: format!("bad excluded hour {h}: {e}"),
        })?;
        excluded_hours.insert(ts, reason);
    }
    Ok(LinkDataset {
        link_id,
        features,
        target_name,
        target,
        excluded_hours,
    })
}
