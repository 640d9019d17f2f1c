//! Objective layer: group-relative advantages, the RSPO loss with its
//! detached residual weights, the advantage-weighted and matched-quadratic
//! comparison objectives, and gradient assembly from per-sample score
//! gradients.
//!
//! All losses take a [`RelativeScoreBatch`]; the batch center and the RSPO
//! weights are constants for differentiation, so every gradient here is a
//! linear combination of the per-sample score gradients `grad delta_i`.

mod advantage;
mod objective;

pub use advantage::{batch_advantages, group_advantages, AdvantageConfig, BatchAdvantages};
pub use objective::{
    aw_gradient, aw_loss, fixed_point_residual, quad_gradient, quad_loss, rspo_gradient, rspo_loss,
    rspo_weights, LossOutput, Objective, QuadLoss,
};

use thiserror::Error;

pub use crate::score::RelativeScoreBatch;

/// Default feedback coefficient.
pub const DEFAULT_LAMBDA: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum RspoError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("lambda must be positive for this objective, got {0}")]
    NonPositiveLambda(f64),
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("group needs at least 2 completions, got {0}")]
    GroupTooSmall(usize),
    #[error("score gradient {index} has dimension {got}, expected {expected}")]
    GradientDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("empty micro-batch")]
    EmptyBatch,
    #[error("advantage stabilizer must be positive, got {0}")]
    InvalidEpsilon(f64),
}
