//! Experiment driver for the fedleak simulator: config files, the
//! generate / run / report / ttest pipeline, and artifact emission.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod ttest;

pub use config::{ExperimentConfig, SCHEMA, SCHEMA_VERSION};
pub use error::{CliError, Result};
pub use pipeline::{cmd_gen_corpus, cmd_run, CorpusSummary, RunSummary};
pub use report::cmd_report;
pub use ttest::cmd_ttest;

/// Runs `f` on a dedicated pool of `jobs` worker threads (the rayon
/// default when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::config("--jobs", "must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config("--jobs", e.to_string()))?;
    Ok(pool.install(f))
}
