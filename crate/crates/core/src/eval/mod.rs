//! Cross-validated evaluation, error metrics, baselines and exhaustive oracles.

mod experiment;
mod folds;
mod metrics;
mod oracle;

pub use experiment::{
    float_or_sentinel, random_supports, run_experiment, ExperimentConfig, ExperimentReport,
    FoldSummary, KPolicy, Method, ReportRecord, SeriesPoint,
};
pub use folds::{kfold_split, FoldPlan};
pub use metrics::{mse_mapped, snr_db, Mse};
pub use oracle::{
    brute_force_support, planted_instance, projection_residual, random_baseline, random_support,
    PlantedInstance, ENUMERATION_LIMIT,
};
