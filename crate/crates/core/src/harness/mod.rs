//! Experiment harness: configuration, truth synthesis, multi-initialization
//! runs, metrics and persistent outputs.

mod build;
mod config;
mod io;
mod report;
mod run;
mod sample;

pub use build::{
    build_domain, build_functionals, build_parameterization, build_physics, make_truth, step_truth,
    Experiment, Seeds, Truth,
};
pub use config::{
    ExperimentConfig, GChoice, Hierarchy, ModelProblem, ParamKind, PlainLengthScale, SampleKind,
    ScalingChoice, SolverChoice, TruthKind,
};
pub use io::{field_shape, read_field_bin, sha256_hex, write_array_bin, write_field_bin};
pub use report::{median, report, summarize, InitRow, Summary};
pub use run::{
    compute_metrics, controls_from, ensemble_mean_field, ensemble_mean_length_scale,
    initial_ensemble, load_run_input, run_experiment, run_initialization, snapshot_schedule,
    FileEntry, InitOutcome, InitSummary, Metrics, RunManifest, VERSION,
};
pub use sample::sample_prior;

/// Parses, resolves and validates a config file.
pub fn load_config(path: &std::path::Path) -> crate::Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}
