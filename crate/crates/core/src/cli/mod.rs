//! Batch-experiment front end: a flat `key = value` configuration, the
//! end-to-end pipeline with a seed sweep, and single-stage commands that
//! exchange artifacts through an output directory.

mod commands;
mod config;
mod pipeline;

pub use commands::{run_stage, Stage, StageTiming};
pub use config::{
    parse_seeds, DatasetSource, EvalToggles, ExperimentConfig, FlatConfig, UnlearnKind,
};
pub use pipeline::{
    attack, kde_triple, load_graph, pruned, retrain, run_pipeline, run_seed, sample_request,
    thread_pool, write_seed, AttackResult, Retrained, SeedRun, FAILED_MARKER, THREADS_ENV,
};
