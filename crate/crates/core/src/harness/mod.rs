//! Monte Carlo experiments: configuration, execution, regression and
//! result files.

pub mod config;
pub mod fit;
pub mod io;
pub mod run;

pub use config::{DeltaSpec, ExperimentConfig, Policy};
pub use fit::{bootstrap_mean_ci, fit_scaling_exponent, MeanInterval, PowerLawFit};
pub use io::{read_results, summarize, summary_csv, write_results, CsvSink, Format, ResultRow, SummaryRow};
pub use run::{experiment_points, run_and_save, run_experiment, run_experiment_with, run_trial, trial_seed, TrialPoint};
