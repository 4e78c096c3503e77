//! Importance-sampling estimators and the end-to-end pipelines.

pub mod pipeline;
pub mod proposal;
pub mod sampling;
pub mod trace;

pub use pipeline::{batch_sizes, run_deep_is, run_iterative, run_nmc, run_robust, train_stage1, PipelineConfig, PipelineOutput};
pub use proposal::{log_likelihood_ratio, sample_mixture, MixtureProposal};
pub use sampling::{accumulate_terms, estimate_deep_is, estimate_nmc, estimate_robust};
pub use trace::{
    acc_rate, checkpoints, deg_conservativeness, relative_error, stop_at, Accumulator, EstimateTrace, Method,
    RunResult, TracePoint,
};
