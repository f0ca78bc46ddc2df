//! Metrics, experiment configuration and the multi-trial runner.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{
    AttackConfig, AttackName, DatasetConfig, ExperimentConfig, Method, RecoverySettings,
    SweepConfig, SweepParam, ZipfSpec,
};
pub use experiment::{
    format_table, read_frequency_table, run_experiment, run_sweep, write_results,
    write_sweep_results, ExperimentReport, FrequencyRow, Metric, MetricRow, SweepReport,
    TrialArtifacts,
};
pub use metrics::{frequency_gain, mse};

use crate::error::{Error, Result};

/// Run `f` on a dedicated pool of `jobs` threads; `None` uses the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("jobs: must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("jobs: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
