//! Experiment driver behind the `slod` binary: configuration, experiment
//! grids, result tables, plots and the source cache.

pub mod cache;
pub mod config;
pub mod csv;
pub mod plot;
pub mod run;

pub use config::{CoefficientSpec, ExperimentConfig, SteklovSpec};
pub use csv::{load_results, ResultRow};
pub use plot::{emit_plot, PlotKind};
pub use run::{run_basis, run_check, run_convergence, run_decay, run_steklov, RunReport};
