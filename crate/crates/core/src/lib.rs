//! Grid-frequency stability analysis toolkit.
//!
//! The crate covers the full path from raw measurement files to explained
//! models: parsing 1 Hz frequency recordings and market/transmission tables
//! (`ingest`), hourly stability indicators (`indicators`), feature-table
//! assembly for the stability and flow datasets (`features`), gradient
//! boosted regression trees (`gbdt`), exact per-feature attributions
//! (`treeshap`), and the downstream reports: normalized importances,
//! dependency tables, rank correlations, and ramp speeds (`analysis`).
//!
//! Missing values are `f64::NAN` everywhere; CSV round-trips map NaN to the
//! empty field. All randomness flows through explicit `u64` seeds so that
//! identical inputs produce bit-identical outputs.

pub mod analysis;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod indicators;
pub mod ingest;
pub mod numeric;
pub mod seeds;
pub mod treeshap;

pub use error::{Error, Result};
