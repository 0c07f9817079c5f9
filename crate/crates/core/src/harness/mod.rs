//! Scenario configuration, end-to-end pipeline wiring, sweeps, rate
//! calibration and output files.

mod config;
mod output;
mod pipeline;
mod sweep;

pub use config::{Detectors, LockMode, MemoryConfig, ScenarioConfig};
pub use output::{write_afc_spectrum, write_run_outputs, afc_plot_grid};
pub use pipeline::{
    run_scenario, LockSummary, MemoryOutcomeCounts, OriginCounts, Provenance, RunCounts, RunReport, RunSummary,
};
pub use sweep::{calibrate_rate, sweep, with_parameter, write_sweep_csv, Calibration, CalibrationStep, SweepRow};
