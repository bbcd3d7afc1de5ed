//! Experiment plumbing: config files, per-round CSV, summaries and the
//! acceptance checks.

pub mod config;
pub mod csv_out;
pub mod summary;
pub mod verify;

pub use config::ExperimentConfig;
pub use csv_out::{emit_csv, load_csv, read_csv, write_csv};
pub use summary::{summarize, BoundComparison, MetricsSummary};
pub use verify::{run_criterion, run_suite, suite_ids, Outcome};
