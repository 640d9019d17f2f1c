//! Brute-force and closed-form reference computations.
//!
//! Nothing here calls into the estimators in [`crate::score`] or
//! [`crate::rspo`]; every quantity is recomputed from the denoiser's
//! log-probabilities or from explicit distributions.

mod audit;
mod bound;
mod kl;
mod likelihood;

pub use audit::{run_audit, AuditCheck, AuditConfig, AuditReport, CheckStatus};
pub use bound::{perturbation_bound_check, PerturbationCheck};
pub use kl::{kl_proxy, kl_proxy_gap_slope, kl_regularized_optimum, loglog_slope, KlOptimum, KlProxy};
pub use likelihood::{exact_elbo_expectation, exact_sequence_loglik, mask_set_probability};

use rand::Rng;
use thiserror::Error;

use crate::mdm::{Architecture, DenoiserParams, MdmError, TokenId};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("beta must be positive and finite, got {0}")]
    NonPositiveBeta(f64),
    #[error("distributions do not share support at index {0}")]
    SupportMismatch(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Mdm(#[from] MdmError),
}

/// Size envelope for exhaustive computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TinyLimits {
    /// Clean tokens the denoiser may emit.
    pub max_vocab: usize,
    pub max_len: usize,
    /// Reverse-chain time steps.
    pub max_steps: usize,
    pub max_enumeration: u64,
}

impl Default for TinyLimits {
    fn default() -> Self {
        Self {
            max_vocab: 4,
            max_len: 3,
            max_steps: 4,
            max_enumeration: 1_000_000,
        }
    }
}

impl TinyLimits {
    pub(crate) fn check(&self, vocab: usize, len: usize, steps: usize, count: u64) -> Result<(), OracleError> {
        if vocab > self.max_vocab {
            return Err(OracleError::LimitExceeded(format!("vocab {vocab} > {}", self.max_vocab)));
        }
        if len == 0 || len > self.max_len {
            return Err(OracleError::LimitExceeded(format!("length {len} not in 1..={}", self.max_len)));
        }
        if steps > self.max_steps {
            return Err(OracleError::LimitExceeded(format!("steps {steps} > {}", self.max_steps)));
        }
        if count > self.max_enumeration {
            return Err(OracleError::LimitExceeded(format!(
                "{count} enumerated terms > {}",
                self.max_enumeration
            )));
        }
        Ok(())
    }
}

/// A reference denoiser small enough for exhaustive checks, with one prompt
/// and one clean completion.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub params: DenoiserParams,
    pub prompt: Vec<TokenId>,
    pub completion: Vec<TokenId>,
}

impl TinyInstance {
    /// Vocabulary of three clean tokens plus the mask, completion length
    /// `1..=3`, a prompt of one or two tokens. Parameters are drawn wide
    /// (`U[-scale, scale]`) so the conditionals are far from uniform.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Self {
        let len = rng.gen_range(1..=3);
        let prompt_len = rng.gen_range(1..=2);
        let arch = Architecture {
            vocab_size: 4,
            window: 2,
            hidden: 6,
            embed_dim: 3,
            positions: len,
            prompt_positions: prompt_len,
        };
        let theta = (0..arch.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect();
        let params = DenoiserParams::from_theta(arch, theta).expect("finite draws");
        let clean = arch.num_outputs() as TokenId;
        Self {
            params,
            prompt: (0..prompt_len).map(|_| rng.gen_range(0..clean)).collect(),
            completion: (0..len).map(|_| rng.gen_range(0..clean)).collect(),
        }
    }
}
