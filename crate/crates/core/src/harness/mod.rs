//! Training loop, multi-seed experiments, metrics and summary tables.

mod config;
mod experiments;
mod stats;
mod train;

pub use config::{Schedule, TrainConfig};
pub use experiments::{
    ablate_depth, compare, default_site_sets, format_summary, metrics_files, robustness, run_seeds,
    sweep_n, write_summary, Dataset, Output, Perturbation, RunResult, DEFAULT_N_VALUES,
    SUMMARY_HEADER,
};
pub use stats::{mean_variance, t_test, t_two_sided_p, TTest};
pub use train::{
    dump_attention, evaluate, format_metrics, lr_at, make_splits, save_run, train, write_metrics,
    MetricRow, SeedResult, Splits, TrainOutcome, METRICS_HEADER,
};
