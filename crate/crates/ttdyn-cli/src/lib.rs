//! Experiment harness for ttdyn: config files, sweeps over schemes, ranks and
//! sub-step counts, oracle comparisons and CSV output.

pub mod analysis;
pub mod config;
pub mod output;
pub mod runner;

pub use analysis::{compare, fit_slope, read_summary, slopes, Comparison, SlopeFit, SummaryRow};
pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
pub use output::{write_outputs, SUMMARY_FILE};
pub use runner::{run_experiment, Cell, RunOptions, TrajectoryRecord};

/// Overrides `output.dir` from the config.
pub const OUTPUT_DIR_ENV: &str = "TTDYN_OUTPUT_DIR";
