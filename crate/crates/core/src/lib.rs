//! Relative score policy optimization (RSPO) for tiny masked diffusion
//! language models.
//!
//! * [`mdm`]: masked diffusion model, reference denoiser, samplers.
//! * [`score`]: coupled-mask ELBO scores and centered relative scores.
//! * [`rspo`]: group advantages, RSPO and comparison objectives, gradients.
//! * [`tasks`]: verifiable toy tasks and their reward functions.
//! * [`oracle`]: brute-force and closed-form reference computations.
//! * [`harness`]: training loop, optimizer, configuration and metrics.

pub mod harness;
pub mod mdm;
pub mod oracle;
pub mod rspo;
pub mod score;
pub mod tasks;

pub use mdm::{Architecture, DecodeConfig, Denoiser, DenoiserParams, Sequence, TokenId, Vocab};
pub use rspo::{AdvantageConfig, LossOutput, Objective};
pub use score::{ElboEstimate, MaskSample, RelativeScoreBatch};
