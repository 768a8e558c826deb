//! Stage 1: frequency traces to hourly stability indicators, one CSV per
//! area under `indicators/`.

use anyhow::{bail, Context};
use std::path::{Path, PathBuf};

use gridshap::features::{indicator_unit, ColumnSchema, TableSchema, INDICATOR_NAMES};
use gridshap::indicators::{compute_hourly_indicators, write_indicator_csv};
use gridshap::ingest::parse_frequency_csv;

use super::{sanitize, StageContext};
use crate::config::PipelineConfig;

pub fn area_csv_path(out_dir: &Path, area_id: &str) -> PathBuf {
    out_dir.join("indicators").join(format!("{}.csv", sanitize(area_id)))
}

pub fn area_schema_path(out_dir: &Path, area_id: &str) -> PathBuf {
    out_dir.join("indicators").join(format!("{}.schema.json", sanitize(area_id)))
}

fn indicator_schema(area_id: &str) -> TableSchema {
    let mut columns = vec![
        ColumnSchema {
            name: "hour".into(),
            unit: "UTC".into(),
            provenance: "hour boundary of the underlying 1 Hz window".into(),
            role: "index".into(),
        },
        ColumnSchema {
            name: "area".into(),
            unit: "".into(),
            provenance: "synchronous area identifier".into(),
            role: "label".into(),
        },
    ];
    let headers = ["rocof_hz_per_s", "nadir_hz", "msd_hz2", "integral_hz_s"];
    for (name, header) in INDICATOR_NAMES.iter().zip(headers) {
        columns.push(ColumnSchema {
            name: header.into(),
            unit: indicator_unit(name).into(),
            provenance: format!("hourly {name} of area {area_id}"),
            role: "indicator".into(),
        });
    }
    columns.push(ColumnSchema {
        name: "valid".into(),
        unit: "".into(),
        provenance: "false when gaps exceeded the completeness threshold".into(),
        role: "flag".into(),
    });
    TableSchema {
        table: format!("indicators_{area_id}"),
        columns,
        excluded_hours: Default::default(),
    }
}

pub fn run(config: &PipelineConfig, mut ctx: StageContext) -> anyhow::Result<()> {
    if config.frequency_inputs.is_empty() {
        bail!("config declares no frequency inputs; nothing to compute");
    }
    ctx.subdir("indicators")?;
    for input in &config.frequency_inputs {
        ctx.record_input(&input.path)?;
        let trace = parse_frequency_csv(&input.path, &input.area_id)
            .with_context(|| format!("ingesting frequency trace for {}", input.area_id))?;
        log::info!(
            "area {}: {} samples, {} gap-filled",
            input.area_id,
            trace.len(),
            trace.gap_count()
        );
        let records = compute_hourly_indicators(&trace, &config.indicator_params)
            .with_context(|| format!("computing indicators for {}", input.area_id))?;

        let csv_path = area_csv_path(&ctx.out_dir, &input.area_id);
        write_indicator_csv(&input.area_id, &records, &csv_path)
            .with_context(|| format!("writing {}", csv_path.display()))?;
        let schema_path = area_schema_path(&ctx.out_dir, &input.area_id);
        super::write_schema(&schema_path, &indicator_schema(&input.area_id))?;
        ctx.add_artifact(csv_path);
        ctx.add_artifact(schema_path);
    }
    ctx.finish()
}
