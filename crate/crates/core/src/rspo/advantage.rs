use serde::{Deserialize, Serialize};

use super::RspoError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageConfig {
    /// Divide by the group reward standard deviation plus `epsilon`.
    pub normalize: bool,
    pub epsilon: f64,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self {
            normalize: false,
            epsilon: 1e-4,
        }
    }
}

/// Zero-sum advantages for one prompt group: `r_i - mean(r)`, optionally
/// divided by `sigma_r + epsilon` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], cfg: &AdvantageConfig) -> Result<Vec<f64>, RspoError> {
    if rewards.len() < 2 {
        return Err(RspoError::GroupTooSmall(rewards.len()));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(RspoError::InvalidEpsilon(cfg.epsilon));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    if !cfg.normalize {
        return Ok(centered);
    }
    let sigma = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
    let scale = sigma + cfg.epsilon;
    Ok(centered.into_iter().map(|c| c / scale).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchAdvantages {
    /// Concatenated in group order.
    pub advantages: Vec<f64>,
    /// Groups whose rewards were all equal. They stay in the batch.
    pub zero_std_groups: usize,
}

impl BatchAdvantages {
    pub fn zero_std_ratio(&self, groups: usize) -> f64 {
        if groups == 0 {
            0.0
        } else {
            self.zero_std_groups as f64 / groups as f64
        }
    }
}

pub fn batch_advantages(groups: &[Vec<f64>], cfg: &AdvantageConfig) -> Result<BatchAdvantages, RspoError> {
    let mut advantages = Vec::with_capacity(groups.iter().map(Vec::len).sum());
    let mut zero_std_groups = 0;
    for g in groups {
        if g.iter().all(|&r| r == g[0]) {
            zero_std_groups += 1;
        }
        advantages.extend(group_advantages(g, cfg)?);
    }
    Ok(BatchAdvantages {
        advantages,
        zero_std_groups,
    })
}
