//! Stage 2: market and transmission tables plus the stage-1 indicators
//! become one stability dataset per observed area and one flow dataset per
//! link, written under `datasets/` with schema sidecars.

use anyhow::{anyhow, bail, Context};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::Duration;
use gridshap::features::{
    aggregate_area, assemble_flow_dataset, assemble_stability_dataset, forecast_error,
    inertia_proxy, net_area_inflow, ramp, write_flow_dataset, write_stability_dataset,
    AggregationRule, BorderFlowSet, FeatureSeries, FeatureTable, TerminalSide,
};
use gridshap::indicators::{read_indicator_csv, HourlyIndicators};
use gridshap::ingest::{parse_outage_csv, parse_tabular_csv, resample_hourly, TabularSeries};

use super::{indicators, sanitize, StageContext};
use crate::config::{AreaConfig, PipelineConfig, TerminalMode};

pub fn stability_csv_path(out_dir: &Path, area_id: &str) -> PathBuf {
    out_dir.join("datasets").join(format!("stability_{}.csv", sanitize(area_id)))
}

pub fn stability_schema_path(out_dir: &Path, area_id: &str) -> PathBuf {
    out_dir.join("datasets").join(format!("stability_{}.schema.json", sanitize(area_id)))
}

pub fn flow_csv_path(out_dir: &Path, link_id: &str) -> PathBuf {
    out_dir.join("datasets").join(format!("flow_{}.csv", sanitize(link_id)))
}

pub fn flow_schema_path(out_dir: &Path, link_id: &str) -> PathBuf {
    out_dir.join("datasets").join(format!("flow_{}.schema.json", sanitize(link_id)))
}

/// Parse every declared tabular input and bring it to the hourly grid.
pub fn load_hourly_tabular(config: &PipelineConfig) -> anyhow::Result<Vec<TabularSeries>> {
    config
        .tabular_inputs
        .iter()
        .map(|input| {
            let series = parse_tabular_csv(
                &input.path,
                &input.name,
                &input.zone_id,
                input.resolution_minutes,
            )
            .with_context(|| format!("ingesting {}/{}", input.name, input.zone_id))?;
            if series.resolution_minutes > 60 {
                bail!(
                    "series {}/{} has {} min resolution; coarser than hourly is unsupported",
                    input.name,
                    input.zone_id,
                    series.resolution_minutes
                );
            }
            Ok(resample_hourly(&series))
        })
        .collect()
}

fn series_for_zones<'a>(
    all: &'a [TabularSeries],
    name: &str,
    zones: &[String],
) -> Vec<&'a TabularSeries> {
    all.iter()
        .filter(|s| s.name == name && zones.contains(&s.zone_id))
        .collect()
}

fn single_series<'a>(all: &'a [TabularSeries], name: &str) -> anyhow::Result<&'a TabularSeries> {
    let mut matches = all.iter().filter(|s| s.name == name);
    let first = matches
        .next()
        .ok_or_else(|| anyhow!("no tabular input named {name}"))?;
    if matches.next().is_some() {
        bail!("series name {name} is ambiguous across zones");
    }
    Ok(first)
}

/// Market-side feature table for one area: zone aggregates, ramps, forecast
/// errors, the inertia proxy, and net HVDC inflows per neighbor.
pub fn area_feature_table(
    area: &AreaConfig,
    all: &[TabularSeries],
    flows: &[BorderFlowSet],
    neighbors: &[String],
) -> anyhow::Result<FeatureTable> {
    let mut inputs: Vec<FeatureSeries> = Vec::new();
    // Unit by aggregated name, for the ramp features.
    let mut aggregated: BTreeMap<String, (TabularSeries, &'static str)> = BTreeMap::new();

    let groups = [
        (&area.power_series, AggregationRule::Sum, "MW", "sum"),
        (&area.price_series, AggregationRule::Mean, "EUR/MWh", "mean"),
    ];
    for (names, rule, unit, verb) in groups {
        for name in names {
            let zones = series_for_zones(all, name, &area.zones);
            let agg = aggregate_area(&zones, &area.area_id, rule)
                .with_context(|| format!("aggregating {name} for area {}", area.area_id))?;
            inputs.push(FeatureSeries {
                series: agg.clone(),
                unit: unit.into(),
                provenance: format!("{verb} of {name} over {} zones", zones.len()),
            });
            aggregated.insert(name.clone(), (agg, unit));
        }
    }
    for name in &area.ramp_of {
        let (agg, unit) = aggregated
            .get(name)
            .ok_or_else(|| anyhow!("ramp_of {name} was not aggregated"))?;
        inputs.push(FeatureSeries {
            series: ramp(agg),
            unit: format!("{unit}/h"),
            provenance: format!("hour-over-hour change of {name}"),
        });
    }
    for pair in &area.forecast_pairs {
        // Pair members need not be features themselves; aggregate on demand.
        let get = |name: &String| -> anyhow::Result<TabularSeries> {
            if let Some((s, _)) = aggregated.get(name) {
                return Ok(s.clone());
            }
            let zones = series_for_zones(all, name, &area.zones);
            aggregate_area(&zones, &area.area_id, AggregationRule::Sum)
                .with_context(|| format!("aggregating {name} for area {}", area.area_id))
        };
        let day_ahead = get(&pair.day_ahead)?;
        let actual = get(&pair.actual)?;
        inputs.push(FeatureSeries {
            series: forecast_error(&day_ahead, &actual),
            unit: "MW".into(),
            provenance: format!("{} minus {}", pair.day_ahead, pair.actual),
        });
    }
    if !area.inertia_weights.is_empty() {
        let mut per_type: Vec<TabularSeries> = Vec::new();
        for name in area.inertia_weights.keys() {
            match aggregated.get(name) {
                Some((s, _)) => per_type.push(s.clone()),
                None => {
                    let zones = series_for_zones(all, name, &area.zones);
                    per_type.push(aggregate_area(&zones, &area.area_id, AggregationRule::Sum)?)
                }
            }
        }
        let refs: Vec<&TabularSeries> = per_type.iter().collect();
        inputs.push(FeatureSeries {
            series: inertia_proxy(&refs, &area.inertia_weights)?,
            unit: "MW".into(),
            provenance: "weighted sum of synchronous generation".into(),
        });
    }
    for neighbor in neighbors {
        let net = net_area_inflow(flows, &area.area_id, neighbor)
            .with_context(|| format!("net inflow into {} from {neighbor}", area.area_id))?;
        let mut scheduled = net.scheduled.clone();
        scheduled.name = format!("sched_inflow_{neighbor}");
        inputs.push(FeatureSeries {
            series: scheduled,
            unit: "MW".into(),
            provenance: format!("net scheduled HVDC inflow from {neighbor}"),
        });
        let mut unscheduled = net.unscheduled.clone();
        unscheduled.name = format!("unsched_inflow_{neighbor}");
        inputs.push(FeatureSeries {
            series: unscheduled,
            unit: "MW".into(),
            provenance: format!("net unscheduled HVDC inflow from {neighbor}"),
        });
    }
    if inputs.is_empty() {
        bail!("area {} produced no features", area.area_id);
    }
    Ok(FeatureTable::from_series(&inputs)?)
}

/// Neighbors of an area over the declared links, deduplicated and sorted.
fn link_neighbors(config: &PipelineConfig, area_id: &str) -> Vec<String> {
    let mut neighbors: Vec<String> = config
        .links
        .iter()
        .filter_map(|l| {
            if l.from_area == area_id {
                Some(l.to_area.clone())
            } else if l.to_area == area_id {
                Some(l.from_area.clone())
            } else {
                None
            }
        })
        .collect();
    neighbors.sort();
    neighbors.dedup();
    neighbors
}

fn load_indicators(
    out_dir: &Path,
    area_id: &str,
) -> anyhow::Result<Vec<HourlyIndicators>> {
    let path = indicators::area_csv_path(out_dir, area_id);
    if !path.is_file() {
        bail!(
            "missing indicator table {}; run the indicators stage first",
            path.display()
        );
    }
    let (read_area, records) = read_indicator_csv(&path)?;
    if read_area != area_id {
        bail!("indicator table {} is for area {read_area}", path.display());
    }
    Ok(records)
}

pub fn run(config: &PipelineConfig, mut ctx: StageContext) -> anyhow::Result<()> {
    for input in &config.tabular_inputs {
        ctx.record_input(&input.path)?;
    }
    if let Some(path) = &config.outage_path {
        ctx.record_input(path)?;
    }
    ctx.subdir("datasets")?;

    let all_series = load_hourly_tabular(config)?;
    let flows: Vec<BorderFlowSet> = config
        .links
        .iter()
        .map(|link| {
            BorderFlowSet::derive(
                &link.from_area,
                &link.to_area,
                single_series(&all_series, &link.scheduled_series)?,
                single_series(&all_series, &link.physical_series)?,
                config.sign_convention,
            )
            .with_context(|| format!("deriving flows for link {}", link.link_id))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut tables: BTreeMap<String, FeatureTable> = BTreeMap::new();
    for area in &config.areas {
        let neighbors = link_neighbors(config, &area.area_id);
        let table = area_feature_table(area, &all_series, &flows, &neighbors)?;
        tables.insert(area.area_id.clone(), table);
    }

    let mut indicators_by_area: BTreeMap<String, Vec<HourlyIndicators>> = BTreeMap::new();
    for input in &config.frequency_inputs {
        indicators_by_area
            .insert(input.area_id.clone(), load_indicators(&ctx.out_dir, &input.area_id)?);
    }

    for input in &config.frequency_inputs {
        let area_id = &input.area_id;
        let dataset = assemble_stability_dataset(
            area_id,
            &indicators_by_area[area_id],
            &tables[area_id],
        );
        let csv = stability_csv_path(&ctx.out_dir, area_id);
        let schema = stability_schema_path(&ctx.out_dir, area_id);
        write_stability_dataset(&dataset, &csv, &schema)
            .with_context(|| format!("writing {}", csv.display()))?;
        log::info!(
            "stability dataset {area_id}: {} hours, {} features",
            dataset.features.n_rows(),
            dataset.features.n_cols()
        );
        ctx.add_artifact(csv);
        ctx.add_artifact(schema);
    }

    let calendars = match &config.outage_path {
        Some(path) => parse_outage_csv(path)?,
        None => Vec::new(),
    };
    for (link, flow) in config.links.iter().zip(&flows) {
        // The modeled link's own inflow columns would hand the model its
        // target (unscheduled) or duplicate a column (scheduled), so each
        // terminal table loses the pair pointing at the opposite side.
        let strip = |table: &FeatureTable, other: &str| -> FeatureTable {
            let mut t = table.clone();
            t.columns.shift_remove(&format!("sched_inflow_{other}"));
            t.columns.shift_remove(&format!("unsched_inflow_{other}"));
            t
        };
        let from_table = strip(&tables[&link.from_area], &link.to_area);
        let to_table = strip(&tables[&link.to_area], &link.from_area);
        let mut terminals = vec![TerminalSide {
            area_id: &link.from_area,
            features: &from_table,
            indicators: indicators_by_area.get(&link.from_area).map(|v| v.as_slice()),
        }];
        if link.terminals == TerminalMode::Both {
            terminals.push(TerminalSide {
                area_id: &link.to_area,
                features: &to_table,
                indicators: indicators_by_area.get(&link.to_area).map(|v| v.as_slice()),
            });
        }
        let mut dataset =
            assemble_flow_dataset(&link.link_id, &terminals, &flow.scheduled, &flow.unscheduled)?;
        let mut reviews = Vec::new();
        if let Some(calendar) = calendars.iter().find(|c| c.link_id == link.link_id) {
            let max_listing = Duration::days(config.exclusion_threshold_days);
            let (masked, r) = gridshap::features::mask_unavailability(
                &dataset, calendar, max_listing,
            )?;
            dataset = masked;
            reviews = r;
        }
        let csv = flow_csv_path(&ctx.out_dir, &link.link_id);
        let schema = flow_schema_path(&ctx.out_dir, &link.link_id);
        write_flow_dataset(&dataset, &csv, &schema)
            .with_context(|| format!("writing {}", csv.display()))?;
        log::info!(
            "flow dataset {}: {} hours, {} features, {} excluded",
            link.link_id,
            dataset.features.n_rows(),
            dataset.features.n_cols(),
            dataset.excluded_hours.len()
        );
        ctx.add_artifact(csv);
        ctx.add_artifact(schema);
        if !reviews.is_empty() {
            let review_path = ctx
                .out_dir
                .join("datasets")
                .join(format!("flow_{}.review.json", sanitize(&link.link_id)));
            super::write_json(&review_path, &reviews)?;
            ctx.add_artifact(review_path);
        }
    }
    ctx.finish()
}
