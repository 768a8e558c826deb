//! Synthetic two-area, one-link input fixture shared by the integration
//! tests. Area alpha (zones z1, z2) and area beta (zone z3) both have 1 Hz
//! frequency traces; an HVDC link `ab` connects them with the unscheduled
//! flow tied to alpha's hourly frequency integral, so the flow model has
//! real structure to learn.
#![allow(dead_code)]

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

use gridshap::ingest::{write_frequency_csv, write_tabular_csv, FrequencyTrace, TabularSeries};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
    pub n_hours: usize,
}

pub fn start_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap()
}

fn hourly_series(name: &str, zone: &str, values: &[f64]) -> TabularSeries {
    TabularSeries {
        name: name.into(),
        zone_id: zone.into(),
        resolution_minutes: 60,
        rows: values
            .iter()
            .enumerate()
            .map(|(h, &v)| (start_time() + Duration::hours(h as i64), v))
            .collect(),
    }
}

/// Per-hour frequency offsets drive everything: the trace, the integral
/// indicator, and through it the unscheduled flow.
fn hour_offsets(n_hours: usize, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    (0..n_hours).map(|_| scale * (rng.gen::<f64>() - 0.5)).collect()
}

fn build_trace(
    area: &str,
    offsets: &[f64],
    rng: &mut ChaCha8Rng,
    gappy_hour: Option<usize>,
) -> FrequencyTrace {
    let n = offsets.len() * 3600;
    let mut samples = Vec::with_capacity(n);
    let mut gap_mask = vec![false; n];
    for (h, &b) in offsets.iter().enumerate() {
        // Amplitude is independent of the offset, so the full-period sine
        // cancels in the integral: the integral isolates b while nadir, MSD,
        // and RoCoF mostly see the sine.
        let amplitude = 0.05 + 0.1 * rng.gen::<f64>();
        for t in 0..3600usize {
            let phase = 2.0 * std::f64::consts::PI * t as f64 / 3600.0;
            let v = 50.0 + b + amplitude * phase.sin() + 0.001 * (rng.gen::<f64>() - 0.5);
            samples.push(v);
        }
        // A sparse sprinkle of dropped samples everywhere, plus one hour
        // gappy enough to be flagged invalid.
        let lo = h * 3600;
        if Some(h) == gappy_hour {
            for t in 0..720 {
                gap_mask[lo + t * 5] = true;
            }
        } else {
            gap_mask[lo + (h * 97) % 3600] = true;
        }
    }
    for (i, &g) in gap_mask.iter().enumerate() {
        if g {
            samples[i] = f64::NAN;
        }
    }
    FrequencyTrace {
        area_id: area.into(),
        start: start_time(),
        samples,
        gap_mask,
    }
}

/// Build the full input directory and its config. `n_hours` should be a
/// multiple of 24 and at least 96 so every model has enough rows to split.
pub fn build_fixture(n_hours: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let alpha_offsets = hour_offsets(n_hours, &mut rng, 0.08);
    let beta_offsets: Vec<f64> = alpha_offsets
        .iter()
        .map(|&b| 0.3 * b + 0.02 * (rng.gen::<f64>() - 0.5))
        .collect();

    let trace_alpha = build_trace("alpha", &alpha_offsets, &mut rng, Some(5));
    let trace_beta = build_trace("beta", &beta_offsets, &mut rng, None);
    write_frequency_csv(&trace_alpha, &dir.path().join("freq_alpha.csv")).unwrap();
    write_frequency_csv(&trace_beta, &dir.path().join("freq_beta.csv")).unwrap();

    let hod = |h: usize| 2.0 * std::f64::consts::PI * ((h % 24) as f64) / 24.0;
    let load_z1: Vec<f64> = (0..n_hours)
        .map(|h| 14000.0 + 2500.0 * hod(h).sin() + 300.0 * (rng.gen::<f64>() - 0.5))
        .collect();
    let load_z2: Vec<f64> = (0..n_hours)
        .map(|h| 9000.0 + 1500.0 * hod(h).cos() + 200.0 * (rng.gen::<f64>() - 0.5))
        .collect();
    let load_z3: Vec<f64> = (0..n_hours)
        .map(|h| 5000.0 + 800.0 * hod(h).sin() + 150.0 * (rng.gen::<f64>() - 0.5))
        .collect();

    // z1 load arrives at quarter-hour resolution with one slot missing, so
    // resampling and NaN propagation both get exercised.
    let mut z1_quarter_rows = Vec::new();
    for (h, &v) in load_z1.iter().enumerate() {
        for q in 0..4usize {
            if h == 7 && q == 2 {
                continue;
            }
            let ts = start_time() + Duration::minutes((h * 60 + q * 15) as i64);
            z1_quarter_rows.push((ts, v + 20.0 * (rng.gen::<f64>() - 0.5)));
        }
    }
    let load_z1_series = TabularSeries {
        name: "load_actual".into(),
        zone_id: "z1".into(),
        resolution_minutes: 15,
        rows: z1_quarter_rows,
    };
    write_tabular_csv(&load_z1_series, &dir.path().join("load_z1.csv")).unwrap();
    write_tabular_csv(
        &hourly_series("load_actual", "z2", &load_z2),
        &dir.path().join("load_z2.csv"),
    )
    .unwrap();
    write_tabular_csv(
        &hourly_series("load_actual", "z3", &load_z3),
        &dir.path().join("load_z3.csv"),
    )
    .unwrap();

    let forecast = |load: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        load.iter().map(|&v| v + 250.0 * (rng.gen::<f64>() - 0.5)).collect()
    };
    write_tabular_csv(
        &hourly_series("load_forecast", "z1", &forecast(&load_z1, &mut rng)),
        &dir.path().join("load_fc_z1.csv"),
    )
    .unwrap();
    write_tabular_csv(
        &hourly_series("load_forecast", "z2", &forecast(&load_z2, &mut rng)),
        &dir.path().join("load_fc_z2.csv"),
    )
    .unwrap();

    let gen_hydro_z1: Vec<f64> =
        (0..n_hours).map(|_| 4000.0 + 500.0 * rng.gen::<f64>()).collect();
    let gen_nuclear_z2: Vec<f64> =
        (0..n_hours).map(|_| 6000.0 + 100.0 * rng.gen::<f64>()).collect();
    let gen_hydro_z3: Vec<f64> =
        (0..n_hours).map(|_| 2000.0 + 300.0 * rng.gen::<f64>()).collect();
    write_tabular_csv(
        &hourly_series("gen_hydro", "z1", &gen_hydro_z1),
        &dir.path().join("gen_hydro_z1.csv"),
    )
    .unwrap();
    write_tabular_csv(
        &hourly_series("gen_nuclear", "z2", &gen_nuclear_z2),
        &dir.path().join("gen_nuclear_z2.csv"),
    )
    .unwrap();
    write_tabular_csv(
        &hourly_series("gen_hydro", "z3", &gen_hydro_z3),
        &dir.path().join("gen_hydro_z3.csv"),
    )
    .unwrap();

    let price: Vec<f64> = (0..n_hours)
        .map(|h| 40.0 + 15.0 * hod(h).sin() + 5.0 * rng.gen::<f64>())
        .collect();
    write_tabular_csv(
        &hourly_series("price_day_ahead", "z1", &price),
        &dir.path().join("price_z1.csv"),
    )
    .unwrap();

    // Link flows, oriented positive out of alpha. The unscheduled component
    // is scheduled minus physical, so physical = scheduled - u.
    let scheduled: Vec<f64> = (0..n_hours)
        .map(|h| 900.0 + 400.0 * hod(h).sin() + 50.0 * (rng.gen::<f64>() - 0.5))
        .collect();
    let unscheduled: Vec<f64> = alpha_offsets
        .iter()
        .map(|&b| 4000.0 * b + 30.0 * (rng.gen::<f64>() - 0.5))
        .collect();
    let physical: Vec<f64> =
        scheduled.iter().zip(&unscheduled).map(|(s, u)| s - u).collect();
    write_tabular_csv(
        &hourly_series("sched_ab", "link_ab", &scheduled),
        &dir.path().join("sched_ab.csv"),
    )
    .unwrap();
    write_tabular_csv(
        &hourly_series("phys_ab", "link_ab", &physical),
        &dir.path().join("phys_ab.csv"),
    )
    .unwrap();

    // One short interval that excludes hours 10..13, one listing long enough
    // to be flagged for review instead of excluded.
    std::fs::write(
        dir.path().join("outages.csv"),
        "link_id,start,end\n\
         ab,2024-03-01T10:00:00Z,2024-03-01T13:00:00Z\n\
         ab,2024-04-01T00:00:00Z,2024-06-10T00:00:00Z\n",
    )
    .unwrap();

    let config = serde_json::json!({
        "global_seed": 99,
        "frequency_inputs": [
            {"area_id": "alpha", "path": "freq_alpha.csv"},
            {"area_id": "beta", "path": "freq_beta.csv"}
        ],
        "tabular_inputs": [
            {"name": "load_actual", "zone_id": "z1", "path": "load_z1.csv"},
            {"name": "load_actual", "zone_id": "z2", "path": "load_z2.csv"},
            {"name": "load_actual", "zone_id": "z3", "path": "load_z3.csv"},
            {"name": "load_forecast", "zone_id": "z1", "path": "load_fc_z1.csv"},
            {"name": "load_forecast", "zone_id": "z2", "path": "load_fc_z2.csv"},
            {"name": "gen_hydro", "zone_id": "z1", "path": "gen_hydro_z1.csv"},
            {"name": "gen_nuclear", "zone_id": "z2", "path": "gen_nuclear_z2.csv"},
            {"name": "gen_hydro", "zone_id": "z3", "path": "gen_hydro_z3.csv"},
            {"name": "price_day_ahead", "zone_id": "z1", "path": "price_z1.csv"},
            {"name": "sched_ab", "zone_id": "link_ab", "path": "sched_ab.csv"},
            {"name": "phys_ab", "zone_id": "link_ab", "path": "phys_ab.csv"}
        ],
        "areas": [
            {
                "area_id": "alpha",
                "zones": ["z1", "z2"],
                "power_series": ["load_actual", "gen_hydro", "gen_nuclear"],
                "price_series": ["price_day_ahead"],
                "ramp_of": ["load_actual"],
                "forecast_pairs": [{"day_ahead": "load_forecast", "actual": "load_actual"}],
                "inertia_weights": {"gen_hydro": 1.0, "gen_nuclear": 1.5}
            },
            {
                "area_id": "beta",
                "zones": ["z3"],
                "power_series": ["load_actual", "gen_hydro"]
            }
        ],
        "links": [
            {
                "link_id": "ab",
                "from_area": "alpha",
                "to_area": "beta",
                "scheduled_series": "sched_ab",
                "physical_series": "phys_ab",
                "terminals": "both"
            }
        ],
        "outage_path": "outages.csv",
        "grid": [
            {"learning_rate": 0.1, "max_leaves": 7, "min_samples_leaf": 5},
            {"learning_rate": 0.05, "max_leaves": 15, "min_samples_leaf": 5}
        ],
        "hyperparams": {
            "learning_rate": 0.1,
            "max_leaves": 15,
            "max_depth": 4,
            "min_samples_leaf": 5,
            "number_of_rounds": 80,
            "early_stopping_patience": 10,
            "feature_subsample": 1.0,
            "seed": 0
        },
        "cv_folds": 5,
        "analysis": {"top_k": 4},
        "ramp_entries": [
            {"name": "cable", "series": "sched_ab", "ramp_rate_per_min": 0.1},
            {"name": "reservoir", "delta_p_mw": 512.0, "ramp_rate_per_min": 0.016666666666666666}
        ]
    });
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    Fixture { dir, config_path, n_hours }
}

/// Run all five stages in-process into `out_dir`.
pub fn run_all_stages(config_path: &Path, out_dir: &Path) {
    use gridshap_cli::commands::{self, StageContext};
    use gridshap_cli::config::PipelineConfig;

    let (config, raw) = PipelineConfig::load(config_path).unwrap();
    let seed = config.global_seed;
    let stages: [(&'static str, fn(&PipelineConfig, StageContext) -> anyhow::Result<()>); 5] = [
        ("indicators", commands::indicators::run),
        ("build-datasets", commands::build_datasets::run),
        ("train", commands::train::run),
        ("explain", commands::explain::run),
        ("report", commands::report::run),
    ];
    for (name, stage) in stages {
        let ctx = StageContext::begin(name, out_dir, &raw, seed).unwrap();
        stage(&config, ctx).unwrap_or_else(|e| panic!("stage {name} failed: {e:#}"));
    }
}
