//! Experiment orchestration: search and manifold phases, metrics, persistence.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod output;
pub mod plot;
pub mod suite;

pub use config::{
    desk_environments, Algorithm, BanditConfig, ExperimentConfig, GridDeclaration, Preset,
};
pub use experiment::{
    run_experiment, run_with_workers, BatchTags, LoopModel, RunCounters, RunOutput,
};
pub use metrics::{
    mixing_fractions, read_metrics, validate_metrics, write_metrics, MetricsRecord, Phase,
    TimingRecord,
};
pub use output::{run_dir, write_run, RunManifest};
pub use plot::{emit_plot, render_svg};
pub use suite::{
    aggregate, percentile, read_aggregate, refresh_summary, run_suite, AggregateRow, SuiteRun,
};

/// Worker threads from `POMS_WORKERS`, else the machine's parallelism.
pub fn default_workers() -> usize {
    std::env::var("POMS_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
}
