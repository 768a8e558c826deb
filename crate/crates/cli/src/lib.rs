//! Pipeline driver around the `gridshap` library: configuration, run
//! manifests, and the five stages (indicators, build-datasets, train,
//! explain, report). The binary in `main.rs` is a thin argument parser over
//! [`commands`]; integration tests call the same functions in-process.

pub mod commands;
pub mod config;
pub mod manifest;
