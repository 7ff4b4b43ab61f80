//! Training runtime: backbone readout, the adapter/classifier head on the
//! autodiff tape, contrastive fine-tuning with SC and KP positives, and the
//! ablation harness.

pub mod ablation;
pub mod backbone;
pub mod head;
pub mod model;
pub mod pretrain;
pub mod trainer;

pub use model::Model;
pub use trainer::{predict, train, RunMetrics, TrainData, TrainOptions};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("prompt template: {0}")]
    Prompt(String),
    #[error("{sample_id}: citance and template need {needed} tokens, window is {max_len}")]
    TooLong {
        sample_id: String,
        needed: usize,
        max_len: usize,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error("empty training split")]
    EmptyTraining,
    #[error("unlabeled sample {0} in a split used for training or scoring")]
    Unlabeled(String),
    #[error("non-finite loss at epoch {epoch}, step {step}; batch dump: {dump}")]
    NonFinite { epoch: usize, step: usize, dump: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] citss_core::Error),
    #[error(transparent)]
    Nn(#[from] citss_nn::NnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;
