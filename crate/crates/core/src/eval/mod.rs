//! Scoring treatment rules and running the replication study.

pub mod metrics;
pub mod replicate;
pub mod report;

pub use metrics::{
    average_loss, average_outcome, classification_metrics, eval_against_draws, score_against_truth,
    true_optimal_rule, ClassificationMetrics, RuleScore,
};
pub use replicate::{
    run_replicate, run_replications, ReplicateFailure, ReplicateRow, ReplicationReport, RuleKind,
    SummaryRow,
};
