use rand::Rng;

use super::ScoreError;
use crate::mdm::{Denoiser, DenoiserParams, Sequence, TokenId};

/// One Monte Carlo corruption of a completion.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSample {
    pub t: f64,
    /// Sorted, nonempty completion indices.
    pub positions: Vec<usize>,
}

/// Draws `t ~ Uniform(0, 1]` and masks each position with probability `t`.
/// Empty draws are rejected and both `t` and the set are redrawn.
pub fn sample_mask_set<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<MaskSample, ScoreError> {
    if len == 0 {
        return Err(ScoreError::EmptyCompletion);
    }
    loop {
        let t = 1.0 - rng.gen::<f64>();
        let positions: Vec<usize> = (0..len).filter(|_| rng.gen::<f64>() < t).collect();
        if !positions.is_empty() {
            return Ok(MaskSample { t, positions });
        }
    }
}

pub fn draw_masks<R: Rng + ?Sized>(len: usize, k: usize, rng: &mut R) -> Result<Vec<MaskSample>, ScoreError> {
    if k == 0 {
        return Err(ScoreError::TooFewMasks { min: 1, got: 0 });
    }
    (0..k).map(|_| sample_mask_set(len, rng)).collect()
}

/// The corrupted state seen by the denoiser for one mask sample.
pub fn apply_mask(prompt: &[TokenId], completion: &[TokenId], mask: &MaskSample, mask_id: TokenId) -> Sequence {
    let mut z = Sequence::new(prompt.to_vec(), completion.to_vec());
    for &i in &mask.positions {
        z.completion[i] = mask_id;
    }
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboEstimate {
    /// `(1/K) sum_k (L/|M_k|) sum_{i in M_k} log p(o_i | masked state)`.
    pub value: f64,
    /// Per-mask terms whose mean is `value`.
    pub per_mask: Vec<f64>,
    pub masks: Vec<MaskSample>,
}

impl ElboEstimate {
    pub fn k(&self) -> usize {
        self.masks.len()
    }

    /// Standard error of `value` from the per-mask spread.
    pub fn standard_error(&self) -> f64 {
        let k = self.per_mask.len() as f64;
        if k < 2.0 {
            return f64::NAN;
        }
        let var = self.per_mask.iter().map(|x| (x - self.value).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }
}

/// Converts a negative ELBO (or cross-entropy style loss) into the
/// likelihood-oriented score used everywhere in this crate.
pub fn likelihood_oriented(negative_elbo: f64) -> f64 {
    -negative_elbo
}

fn check_masks(len: usize, masks: &[MaskSample]) -> Result<(), ScoreError> {
    if len == 0 {
        return Err(ScoreError::EmptyCompletion);
    }
    if masks.is_empty() {
        return Err(ScoreError::NoMasks);
    }
    for (k, m) in masks.iter().enumerate() {
        if m.positions.is_empty() {
            return Err(ScoreError::EmptyMask(k));
        }
        if let Some(&position) = m.positions.iter().find(|&&p| p >= len) {
            return Err(ScoreError::MaskOutOfRange { position, len });
        }
    }
    Ok(())
}

fn mask_term<D: Denoiser + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    completion: &[TokenId],
    mask: &MaskSample,
) -> Result<f64, ScoreError> {
    let z = apply_mask(prompt, completion, mask, denoiser.mask_id());
    let mut sum = 0.0;
    for &i in &mask.positions {
        sum += denoiser.log_probs(&z, i)?[completion[i] as usize];
    }
    Ok(completion.len() as f64 / mask.positions.len() as f64 * sum)
}

/// Masked-diffusion ELBO score of `completion` over the given masks.
pub fn elbo_score<D: Denoiser + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    completion: &[TokenId],
    masks: &[MaskSample],
) -> Result<ElboEstimate, ScoreError> {
    check_masks(completion.len(), masks)?;
    let per_mask = masks
        .iter()
        .map(|m| mask_term(denoiser, prompt, completion, m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ElboEstimate {
        value: per_mask.iter().sum::<f64>() / masks.len() as f64,
        per_mask,
        masks: masks.to_vec(),
    })
}

/// [`elbo_score`] for the reference denoiser, adding `scale * grad` of the
/// estimate into `grad`.
pub fn elbo_score_with_grad(
    params: &DenoiserParams,
    prompt: &[TokenId],
    completion: &[TokenId],
    masks: &[MaskSample],
    scale: f64,
    grad: &mut [f64],
) -> Result<ElboEstimate, ScoreError> {
    check_masks(completion.len(), masks)?;
    let k = masks.len() as f64;
    let len = completion.len() as f64;
    let mut per_mask = Vec::with_capacity(masks.len());
    for m in masks {
        let z = apply_mask(prompt, completion, m, params.arch.mask_id());
        let weight = len / m.positions.len() as f64;
        let mut sum = 0.0;
        for &i in &m.positions {
            sum += params.accumulate_logprob_grad(&z, i, completion[i], scale * weight / k, grad)?;
        }
        per_mask.push(weight * sum);
    }
    Ok(ElboEstimate {
        value: per_mask.iter().sum::<f64>() / k,
        per_mask,
        masks: masks.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDelta {
    pub delta: f64,
    pub current: ElboEstimate,
    pub reference: ElboEstimate,
}

/// Per-token relative score `(E_cur - E_ref) / L_c`, with both ELBO
/// estimates evaluated on the same `k` mask draws.
pub fn coupled_delta<D1, D2, R>(
    current: &D1,
    reference: &D2,
    prompt: &[TokenId],
    completion: &[TokenId],
    k: usize,
    rng: &mut R,
) -> Result<CoupledDelta, ScoreError>
where
    D1: Denoiser + ?Sized,
    D2: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let masks = draw_masks(completion.len(), k, rng)?;
    let cur = elbo_score(current, prompt, completion, &masks)?;
    let reference = elbo_score(reference, prompt, completion, &masks)?;
    Ok(CoupledDelta {
        delta: (cur.value - reference.value) / completion.len() as f64,
        current: cur,
        reference,
    })
}

/// Same quantity as [`coupled_delta`] but with separate mask draws for the
/// two models. Only used to measure what coupling buys.
pub fn independent_delta<D1, D2, R>(
    current: &D1,
    reference: &D2,
    prompt: &[TokenId],
    completion: &[TokenId],
    k: usize,
    rng: &mut R,
) -> Result<f64, ScoreError>
where
    D1: Denoiser + ?Sized,
    D2: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    let m_cur = draw_masks(completion.len(), k, rng)?;
    let m_ref = draw_masks(completion.len(), k, rng)?;
    let cur = elbo_score(current, prompt, completion, &m_cur)?.value;
    let reference = elbo_score(reference, prompt, completion, &m_ref)?.value;
    Ok((cur - reference) / completion.len() as f64)
}

/// A relative score together with its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCompletion {
    pub delta: f64,
    /// Gradient of `delta` with respect to the current parameters.
    pub grad: Vec<f64>,
    pub elbo_current: f64,
    /// `None` when reference subtraction is disabled.
    pub elbo_reference: Option<f64>,
}

/// Relative score and gradient on fixed masks. Without a reference model
/// the score is `E_cur / L_c`.
pub fn relative_score(
    current: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    prompt: &[TokenId],
    completion: &[TokenId],
    masks: &[MaskSample],
) -> Result<ScoredCompletion, ScoreError> {
    let len = completion.len() as f64;
    let mut grad = vec![0.0; current.num_params()];
    let cur = elbo_score_with_grad(current, prompt, completion, masks, 1.0 / len, &mut grad)?;
    let elbo_reference = reference
        .map(|r| elbo_score(r, prompt, completion, masks).map(|e| e.value))
        .transpose()?;
    Ok(ScoredCompletion {
        delta: (cur.value - elbo_reference.unwrap_or(0.0)) / len,
        grad,
        elbo_current: cur.value,
        elbo_reference,
    })
}
