use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Denoiser, MdmError, NoiseSchedule, Sequence, TokenId};

/// Semi-autoregressive confidence decoding settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub gen_len: usize,
    pub block_size: usize,
    pub unmask_per_step: usize,
    /// 0 decodes greedily.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            gen_len: 16,
            block_size: 8,
            unmask_per_step: 2,
            temperature: 0.9,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), MdmError> {
        let bad = |m: &str| Err(MdmError::InvalidDecodeConfig(m.into()));
        if self.gen_len == 0 {
            return bad("gen_len must be positive");
        }
        if self.block_size == 0 || !self.gen_len.is_multiple_of(self.block_size) {
            return bad("block_size must divide gen_len");
        }
        if self.unmask_per_step == 0 {
            return bad("unmask_per_step must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a finite nonnegative number");
        }
        Ok(())
    }

    /// Denoiser calls needed for one completion.
    pub fn total_steps(&self) -> usize {
        (self.gen_len / self.block_size) * self.block_size.div_ceil(self.unmask_per_step)
    }
}

/// A decoded completion and the order in which positions were committed.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub sequence: Sequence,
    pub steps: usize,
    /// Positions committed at each step, in commit order.
    pub commits: Vec<Vec<usize>>,
}

/// Counter-based stream: the same `(seed, stream)` always yields the same draws.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn tempered(log_probs: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = log_probs.iter().map(|l| l / temperature).collect();
    super::denoiser::log_softmax(&scaled)
}

/// One reverse transition from time `t` to `s < t` under the linear schedule.
///
/// Unmasked positions are copied. Each masked position stays masked with
/// probability `(1 - alpha_s) / (1 - alpha_t)` and otherwise takes a token
/// drawn from the denoiser evaluated on `z_t`.
pub fn reverse_step<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    z_t: &Sequence,
    t: f64,
    s: f64,
    rng: &mut R,
) -> Result<Sequence, MdmError> {
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(MdmError::InvalidStep { s, t });
    }
    let keep = NoiseSchedule::Linear.stay_masked(t, s)?;
    let mask = denoiser.mask_id();
    let mut z_s = z_t.clone();
    for i in z_t.masked_positions(mask) {
        if rng.gen::<f64>() < keep {
            continue;
        }
        let lp = denoiser.log_probs(z_t, i)?;
        z_s.completion[i] = sample_categorical(&lp, rng) as TokenId;
    }
    Ok(z_s)
}

/// Block-wise confidence decoding from a fully masked completion.
///
/// Within the active block, every masked position gets a candidate token
/// (argmax at temperature 0, otherwise a tempered sample). The
/// `unmask_per_step` candidates with the highest untempered probability are
/// committed; ties go to the lower position.
pub fn decode_semi_ar<D: Denoiser + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<Decoded, MdmError> {
    cfg.validate()?;
    let mask = denoiser.mask_id();
    let mut state = Sequence::fully_masked(prompt.to_vec(), cfg.gen_len, mask);
    state.check_clean_prompt(mask)?;
    let mut commits = Vec::with_capacity(cfg.total_steps());

    for block_start in (0..cfg.gen_len).step_by(cfg.block_size) {
        let block = block_start..block_start + cfg.block_size;
        loop {
            let masked: Vec<usize> = block.clone().filter(|&i| state.completion[i] == mask).collect();
            if masked.is_empty() {
                break;
            }
            let mut candidates = Vec::with_capacity(masked.len());
            for &i in &masked {
                let lp = denoiser.log_probs(&state, i)?;
                let tok = if cfg.temperature == 0.0 {
                    argmax(&lp)
                } else {
                    sample_categorical(&tempered(&lp, cfg.temperature), rng)
                };
                candidates.push((i, tok, lp[tok].exp()));
            }
            // Stable sort keeps lower positions first among equal confidence.
            candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
            let chosen: Vec<usize> = candidates
                .iter()
                .take(cfg.unmask_per_step)
                .map(|&(i, tok, _)| {
                    state.completion[i] = tok as TokenId;
                    i
                })
                .collect();
            commits.push(chosen);
        }
    }
    Ok(Decoded {
        steps: commits.len(),
        sequence: state,
        commits,
    })
}

/// Decodes `group_size` completions, each on its own counter-based stream
/// derived from one draw of `rng`.
pub fn sample_completion_group<D: Denoiser + Sync + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    group_size: usize,
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<Vec<Decoded>, MdmError> {
    if group_size < 2 {
        return Err(MdmError::GroupTooSmall(group_size));
    }
    let base: u64 = rng.gen();
    (0..group_size as u64)
        .into_par_iter()
        .map(|i| decode_semi_ar(denoiser, prompt, cfg, &mut stream_rng(base, i)))
        .collect()
}
