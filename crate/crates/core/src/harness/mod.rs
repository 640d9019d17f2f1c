//! Training loop, optimizer, configuration, metric persistence and the
//! ablation runner.

mod checkpoint;
mod config;
mod experiment;
mod metrics;
mod optim;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, TrainCheckpoint, TRAIN_CHECKPOINT_MAGIC};
pub use config::{apply_env_overrides, config_from_map, load_config, parse_config, RunConfig};
pub use experiment::{
    parse_ablation_matrix, run_ablation, run_experiment, AblationMatrix, AblationRow, RunOutcome, RunSummary,
};
pub use metrics::{write_metrics, MetricsWriter, StepMetrics};
pub use optim::{adam_update, Adam, AdamState};
pub use train::Trainer;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("step {step}: non-finite {what}")]
    NonFinite { step: usize, what: String },
    #[error("step {step}: zero-sum check failed (sum centered {sum_centered:e}, sum weights {sum_weights:e})")]
    ZeroSum {
        step: usize,
        sum_centered: f64,
        sum_weights: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Mdm(#[from] crate::mdm::MdmError),
    #[error(transparent)]
    Score(#[from] crate::score::ScoreError),
    #[error(transparent)]
    Rspo(#[from] crate::rspo::RspoError),
    #[error(transparent)]
    Task(#[from] crate::tasks::TaskError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
