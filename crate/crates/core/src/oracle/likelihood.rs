use crate::mdm::{Denoiser, Sequence, TokenId};

use super::{OracleError, TinyLimits};

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Probability that the mask law (t ~ U(0,1], Bernoulli(t) per position,
/// empty draws rejected) produces one particular set of `size` positions out
/// of `len`: `int_0^1 t^k (1-t)^(L-k) dt / P(nonempty)`.
pub fn mask_set_probability(len: usize, size: usize) -> f64 {
    assert!(size >= 1 && size <= len);
    let beta = factorial(size) * factorial(len - size) / factorial(len + 1);
    let nonempty = len as f64 / (len as f64 + 1.0);
    beta / nonempty
}

/// State with completion positions in `bits` masked and the rest set to `o`.
fn masked_state(prompt: &[TokenId], o: &[TokenId], bits: u32, mask: TokenId) -> Sequence {
    let completion = o
        .iter()
        .enumerate()
        .map(|(i, &tok)| if bits >> i & 1 == 1 { mask } else { tok })
        .collect();
    Sequence::new(prompt.to_vec(), completion)
}

fn check_tokens(o: &[TokenId], vocab: usize) -> Result<(), OracleError> {
    match o.iter().find(|&&t| t as usize >= vocab) {
        Some(t) => Err(OracleError::InvalidInput(format!("token {t} is not a clean token"))),
        None => Ok(()),
    }
}

/// Expectation of the mask-averaged ELBO estimator over its mask law, by
/// enumerating all nonempty mask sets.
pub fn exact_elbo_expectation<D: Denoiser + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    o: &[TokenId],
    limits: &TinyLimits,
) -> Result<f64, OracleError> {
    let len = o.len();
    limits.check(denoiser.num_outputs(), len, 0, ((1u64 << len.min(63)) - 1) * len as u64)?;
    check_tokens(o, denoiser.num_outputs())?;
    let mask = denoiser.mask_id();
    let mut total = 0.0;
    for bits in 1u32..(1 << len) {
        let size = bits.count_ones() as usize;
        let state = masked_state(prompt, o, bits, mask);
        let mut sum = 0.0;
        for i in (0..len).filter(|i| bits >> i & 1 == 1) {
            sum += denoiser.log_probs(&state, i)?[o[i] as usize];
        }
        total += mask_set_probability(len, size) * len as f64 / size as f64 * sum;
    }
    Ok(total)
}

/// Log-probability that the `steps`-step reverse chain on the grid
/// `t_k = k / steps`, started fully masked, ends at `o`.
///
/// Dynamic program over mask patterns whose unmasked positions agree with
/// `o`; every other path has already left the event.
pub fn exact_sequence_loglik<D: Denoiser + ?Sized>(
    denoiser: &D,
    prompt: &[TokenId],
    o: &[TokenId],
    steps: usize,
    limits: &TinyLimits,
) -> Result<f64, OracleError> {
    let len = o.len();
    if steps == 0 {
        return Err(OracleError::InvalidInput("at least one reverse step".into()));
    }
    limits.check(denoiser.num_outputs(), len, steps, steps as u64 * 3u64.pow(len.min(40) as u32))?;
    check_tokens(o, denoiser.num_outputs())?;
    let mask = denoiser.mask_id();
    let full = (1u32 << len) - 1;
    let mut prob = vec![0.0f64; 1 << len];
    prob[full as usize] = 1.0;

    for k in (1..=steps).rev() {
        let keep = (k - 1) as f64 / k as f64;
        let mut next = vec![0.0f64; 1 << len];
        for bits in 0..=full {
            let p = prob[bits as usize];
            if p == 0.0 {
                continue;
            }
            if bits == 0 {
                next[0] += p;
                continue;
            }
            let state = masked_state(prompt, o, bits, mask);
            let mut hit = [0.0f64; 32];
            for i in (0..len).filter(|i| bits >> i & 1 == 1) {
                hit[i] = denoiser.log_probs(&state, i)?[o[i] as usize].exp();
            }
            // every subset of the masked set is a possible unmask pattern
            let mut sub = bits;
            loop {
                let mut q = p;
                for i in (0..len).filter(|i| bits >> i & 1 == 1) {
                    q *= if sub >> i & 1 == 1 { (1.0 - keep) * hit[i] } else { keep };
                }
                next[(bits & !sub) as usize] += q;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & bits;
            }
        }
        prob = next;
    }
    Ok(prob[0].ln())
}
