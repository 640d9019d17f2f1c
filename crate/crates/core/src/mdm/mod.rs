//! Masked diffusion model core.
//!
//! A sequence is a prompt followed by a completion. Corruption only ever
//! touches completion positions, replacing tokens by the vocabulary's mask
//! token. The reference denoiser ([`DenoiserParams`]) is a single hidden-layer
//! feature model with an analytic backward pass, small enough that every
//! gradient in the crate can be checked against finite differences.

mod checkpoint;
mod denoiser;
mod sampler;
mod schedule;

pub use checkpoint::{read_params, write_params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use denoiser::{
    Architecture, Denoiser, DenoiserParams, Layout, PerfectDenoiser, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN,
    DEFAULT_WINDOW,
};
pub use sampler::{
    decode_semi_ar, reverse_step, sample_completion_group, stream_rng, DecodeConfig, Decoded,
};
pub use schedule::{alpha_linear, forward_mask, NoiseSchedule};

use thiserror::Error;

/// Index of a token in a [`Vocab`].
pub type TokenId = u16;

#[derive(Debug, Error, PartialEq)]
pub enum MdmError {
    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("reverse step requires 0 <= s < t <= 1, got s={s}, t={t}")]
    InvalidStep { s: f64, t: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("position {0} is not masked")]
    PositionNotMasked(usize),
    #[error("position {position} out of range for completion of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("token {0} is not a valid output token")]
    InvalidToken(TokenId),
    #[error("invalid decode config: {0}")]
    InvalidDecodeConfig(String),
    #[error("group size must be at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("prompt contains the mask token at index {0}")]
    MaskedPrompt(usize),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("non-finite parameter at index {0}")]
    NonFiniteParam(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Character vocabulary. Clean tokens take ids `0..num_clean()`; the mask
/// token is always the last id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<char>,
}

impl Vocab {
    /// Builds a vocabulary from distinct clean characters. The mask token is
    /// appended and has no character of its own.
    pub fn new(tokens: &[char]) -> Result<Self, MdmError> {
        if tokens.is_empty() {
            return Err(MdmError::InvalidVocab("no clean tokens".into()));
        }
        if tokens.len() >= TokenId::MAX as usize {
            return Err(MdmError::InvalidVocab("too many tokens".into()));
        }
        for (i, c) in tokens.iter().enumerate() {
            if tokens[..i].contains(c) {
                return Err(MdmError::InvalidVocab(format!("duplicate token {c:?}")));
            }
        }
        Ok(Self {
            tokens: tokens.to_vec(),
        })
    }

    /// A vocabulary of `n` clean letters `a, b, ...`, used by the tiny
    /// verification instances.
    pub fn synthetic(n: usize) -> Self {
        let tokens: Vec<char> = (0..n as u32)
            .map(|i| char::from_u32('a' as u32 + i).expect("ascii letter"))
            .collect();
        Self::new(&tokens).expect("synthetic vocab is valid")
    }

    /// Token count including the mask token.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn num_clean(&self) -> usize {
        self.tokens.len()
    }

    pub fn mask_id(&self) -> TokenId {
        self.tokens.len() as TokenId
    }

    pub fn tokens(&self) -> &[char] {
        &self.tokens
    }

    pub fn id_of(&self, c: char) -> Option<TokenId> {
        self.tokens.iter().position(|&t| t == c).map(|i| i as TokenId)
    }

    pub fn char_of(&self, id: TokenId) -> Option<char> {
        self.tokens.get(id as usize).copied()
    }
}

/// A prompt and a (possibly corrupted) completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    pub prompt: Vec<TokenId>,
    pub completion: Vec<TokenId>,
}

impl Sequence {
    pub fn new(prompt: Vec<TokenId>, completion: Vec<TokenId>) -> Self {
        Self { prompt, completion }
    }

    /// A completion of `len` mask tokens after `prompt`.
    pub fn fully_masked(prompt: Vec<TokenId>, len: usize, mask_id: TokenId) -> Self {
        Self {
            prompt,
            completion: vec![mask_id; len],
        }
    }

    pub fn is_masked(&self, position: usize, mask_id: TokenId) -> bool {
        self.completion[position] == mask_id
    }

    pub fn masked_positions(&self, mask_id: TokenId) -> Vec<usize> {
        self.completion
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == mask_id)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_masked(&self, mask_id: TokenId) -> usize {
        self.completion.iter().filter(|&&t| t == mask_id).count()
    }

    /// Rejects prompts that contain the mask token.
    pub fn check_clean_prompt(&self, mask_id: TokenId) -> Result<(), MdmError> {
        match self.prompt.iter().position(|&t| t == mask_id) {
            Some(i) => Err(MdmError::MaskedPrompt(i)),
            None => Ok(()),
        }
    }
}
