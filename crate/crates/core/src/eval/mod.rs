//! Metrics, the experiment grid runner and report emission.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    default_modes, default_routers, default_suites, multi_model_ratio, run_experiment,
    run_experiment_with_jobs, BaselineRow, CellStatus, ConfigAggregate, ConfigKey, EnsembleRow,
    ExperimentConfig, ExperimentError, ExperimentReport, HistoryEntry, Splits, Suite,
};
pub use metrics::{accuracy, register_metric, roc_auc, Metric, MetricError, MetricId, Prediction};
