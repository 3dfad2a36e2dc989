//! Configuration, training, evaluation and model comparison.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod nemenyi;
pub mod train;

pub use config::ExperimentConfig;
pub use experiment::{compare_runs, run_experiment, run_on_log, write_report, Checkpoint};
pub use metrics::{compute_auc, evaluate_auc};
pub use nemenyi::{nemenyi_test, reference_table, Alpha, AucTable, NemenyiResult};
pub use train::{train_model, EpochRecord, MetricsReport, TrainOutcome};
