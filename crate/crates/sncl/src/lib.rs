//! Experiment runner on top of `sncl-core`: MNIST IDX loading, TOML
//! configuration, seeded multi-run execution, metrics files and SVG plots.

pub mod config;
pub mod data;
pub mod experiment;
pub mod plot;
pub mod report;
pub mod sweep;

pub use sncl_core as core;
