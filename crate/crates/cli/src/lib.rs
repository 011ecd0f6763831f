//! Experiment runner: data generation, training, evaluation and the graph
//! construction benchmark, driven by flat `key = value` configs.

pub mod commands;
pub mod config;

pub use config::{DatasetSource, ExperimentConfig};
