//! Experiment runner: configuration, presets, artifacts and comparisons.

pub mod artifacts;
pub mod config;
pub mod experiment;
pub mod gradients;
pub mod presets;
pub mod summarize;
