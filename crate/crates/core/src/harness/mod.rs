//! Command-line experiments: config parsing, the verification and sweep
//! suites, and CSV / SVG output.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod io;

pub use commands::{
    cmd_ksd, cmd_metrics, cmd_run, cmd_sweep, cmd_theory, cmd_verify, exit_code_for, sweep, verify, Check,
    MetricMode, SweepRow, VerifyReport, EXIT_ABORT, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION,
};
pub use config::ExperimentConfig;
pub use experiment::{Experiment, TheoryInputs};
