//! Scenario generation, ablation, morphism and evaluation metrics.

mod ablation;
mod bench;
mod dataset;
mod metrics;
mod morph;

pub use ablation::{ablation_run, AblationMask, AblationRow, AblationTable};
pub use bench::{bench, results_csv, FeatureError, MetricsReport, ScenarioResult, Timings, SF_DEFINITION};
pub use dataset::{
    generate_dataset, read_jsonl, sample_loads, split, splitmix64, validate_samples, write_jsonl,
    GroundTruth, Reject, Sample, Scenario,
};
pub use metrics::{l_cost, mean, median, metric_mape, metric_su, relative_errors, speedup_factor};
pub use morph::{prior_analysis, quality_prior_morphism, task_mape, x_mape, MorphConfig, MorphOp, MorphOutcome, MorphStep, PriorCase};
