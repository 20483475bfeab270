//! Seeded Monte Carlo experiments over channel realizations.

pub mod config;
pub mod experiment;
pub mod output;
pub mod verify;

pub use config::{
    named_experiment, Experiment, FixedDistances, Sweep, SweepParam, SystemConfig, EXPERIMENT_NAMES,
};
pub use experiment::{
    ensure_invariants, run_experiment, run_trial, Architecture, Design, ExperimentResult,
    ResultCell, TrialRecord,
};
pub use output::{
    emit_results, read_results, write_experiment, write_plot_data, OutputFormat, CSV_COLUMNS,
};
