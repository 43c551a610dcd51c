//! Experiment harness: wires the world, detector, feature generators and
//! deciders into runnable variants, logs episodes as CSV and draws curves.

use std::path::Path;

pub mod agents;
pub mod config;
pub mod experiment;
pub mod pipeline;
pub mod plot;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, Variant};
pub use experiment::{compare_table, moving_average, run_experiment, run_many, EpisodeRecord, MetricsLog};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] drlek_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metrics csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
