//! Experiment orchestration for fair graph augmentation: configs, single
//! trials, grid search over the loss weights, ablations, epoch sweeps,
//! analyses and figures.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
pub mod grid;
pub mod plot;
pub mod sweep;

pub use config::{ExperimentConfig, Grid, Task};
pub use experiment::{run_experiment, ExperimentReport};
pub use grid::{grid_search, GridResult, SelectionRule};
