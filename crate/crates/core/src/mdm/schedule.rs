use rand::Rng;

use super::{MdmError, Sequence, TokenId};

/// Linear schedule `alpha(t) = 1 - t`: at time `t` each completion token is
/// masked with probability `t`.
pub fn alpha_linear(t: f64) -> Result<f64, MdmError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(MdmError::TimeOutOfRange(t));
    }
    Ok(1.0 - t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseSchedule {
    #[default]
    Linear,
}

impl NoiseSchedule {
    pub fn alpha(self, t: f64) -> Result<f64, MdmError> {
        match self {
            NoiseSchedule::Linear => alpha_linear(t),
        }
    }

    /// Probability that a position masked at time `t` is still masked at
    /// time `s < t` under the reverse process.
    pub fn stay_masked(self, t: f64, s: f64) -> Result<f64, MdmError> {
        let (at, as_) = (self.alpha(t)?, self.alpha(s)?);
        if !(s < t) {
            return Err(MdmError::InvalidStep { s, t });
        }
        Ok((1.0 - as_) / (1.0 - at))
    }
}

/// Corrupts the completion of a clean sequence at time `t`. The prompt is
/// never touched.
pub fn forward_mask<R: Rng + ?Sized>(
    clean: &Sequence,
    t: f64,
    mask_id: TokenId,
    rng: &mut R,
) -> Result<Sequence, MdmError> {
    clean.check_clean_prompt(mask_id)?;
    let p_mask = 1.0 - alpha_linear(t)?;
    let completion = clean
        .completion
        .iter()
        .map(|&tok| {
            if rng.gen::<f64>() < p_mask {
                mask_id
            } else {
                tok
            }
        })
        .collect();
    Ok(Sequence::new(clean.prompt.clone(), completion))
}
