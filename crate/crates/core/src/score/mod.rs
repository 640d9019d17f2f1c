//! ELBO sequence scores, coupled relative scores and micro-batch centering.
//!
//! Every score here is likelihood-oriented: larger means the model finds the
//! completion more likely. Code that starts from a cross-entropy or negative
//! ELBO must go through [`likelihood_oriented`].

mod batch;
mod elbo;

pub use batch::{batch_mean_offset, center_scores, uncentered_scores, var_delta, RelativeScoreBatch};
pub use elbo::{
    apply_mask, coupled_delta, draw_masks, elbo_score, elbo_score_with_grad, independent_delta,
    likelihood_oriented, relative_score, sample_mask_set, CoupledDelta, ElboEstimate, MaskSample,
    ScoredCompletion,
};

use thiserror::Error;

use crate::mdm::MdmError;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("completion is empty")]
    EmptyCompletion,
    #[error("no mask samples supplied")]
    NoMasks,
    #[error("mask sample {0} is empty")]
    EmptyMask(usize),
    #[error("mask position {position} out of range for completion of length {len}")]
    MaskOutOfRange { position: usize, len: usize },
    #[error("need at least {min} mask samples, got {got}")]
    TooFewMasks { min: usize, got: usize },
    #[error("micro-batch needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error(transparent)]
    Mdm(#[from] MdmError),
}
