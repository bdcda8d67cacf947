//! Classification metrics and paired significance testing.

pub mod compare;
pub mod metrics;
pub mod wilcoxon;

pub use compare::{compare_to_baseline, paired_accuracies, PairingSpec};
pub use metrics::{compute_metrics, EvalReport};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_with_method, WilcoxonMethod, WilcoxonResult};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("all paired differences are zero (no difference)")]
    AllZeroDifferences,
    #[error("{n_effective} nonzero differences, need at least {needed}")]
    TooFewPairs { n_effective: usize, needed: usize },
    #[error("non-finite score: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
