//! Online anticipation, metrics and experiment runners.

pub mod anticipation;
pub mod benchmark;
pub mod experiments;
pub mod metrics;
pub mod report;

pub use anticipation::{anticipate, anticipate_all, anticipate_probs, AnticipationResult, DEFAULT_THRESHOLD};
pub use experiments::{
    lambda_sweep, run_adaptation, run_experiment_1, run_experiment_2, run_experiment_3, AdaptationReport, Condition,
    ExperimentConfig, LodoReport,
};
pub use metrics::{compute_metrics, f1_score, MetricsReport};
