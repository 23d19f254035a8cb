//! Experiment runner: config loading, dataset caching, training of the ViT
//! variants, evaluation against the baselines and result reports.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod tasks;

pub use config::{ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use pipeline::{evaluate, generate, plot_predictions, render_samples, run_experiment, train_all, Layout};
pub use report::{EvalReport, Outcome};

/// Sizes the global worker pool from `SPECVIT_WORKERS` (all cores when
/// unset). Results do not depend on the pool size.
pub fn init_workers() -> Result<usize> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HarnessError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
        Err(_) => 0,
    };
    // A second initialization (tests, embedding) keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

pub const WORKERS_ENV: &str = "SPECVIT_WORKERS";
