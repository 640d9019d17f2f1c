use super::ScoreError;

/// Relative scores of one loss micro-batch with their detached center.
///
/// `center` is a constant for differentiation: the gradient of
/// `centered[i]` is the gradient of `deltas[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeScoreBatch {
    pub deltas: Vec<f64>,
    pub center: f64,
    pub centered: Vec<f64>,
    /// Completion length of each sample, when known.
    pub lengths: Vec<usize>,
    pub centering: bool,
}

impl RelativeScoreBatch {
    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn with_lengths(mut self, lengths: Vec<usize>) -> Self {
        self.lengths = lengths;
        self
    }
}

/// Subtracts the detached batch mean.
pub fn center_scores(deltas: &[f64]) -> Result<RelativeScoreBatch, ScoreError> {
    if deltas.len() < 2 {
        return Err(ScoreError::BatchTooSmall(deltas.len()));
    }
    let center = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Ok(RelativeScoreBatch {
        deltas: deltas.to_vec(),
        center,
        centered: deltas.iter().map(|d| d - center).collect(),
        lengths: Vec::new(),
        centering: true,
    })
}

/// The centering ablation: scores pass through unchanged.
pub fn uncentered_scores(deltas: &[f64]) -> Result<RelativeScoreBatch, ScoreError> {
    if deltas.len() < 2 {
        return Err(ScoreError::BatchTooSmall(deltas.len()));
    }
    Ok(RelativeScoreBatch {
        deltas: deltas.to_vec(),
        center: 0.0,
        centered: deltas.to_vec(),
        lengths: Vec::new(),
        centering: false,
    })
}

/// Population variance of the raw scores, computed as the mean of squared
/// deviations from the batch mean (independent of the centering flag).
pub fn var_delta(batch: &RelativeScoreBatch) -> f64 {
    let n = batch.deltas.len() as f64;
    let mean = batch.deltas.iter().sum::<f64>() / n;
    batch.deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n
}

/// Mean of the scores that actually enter the loss.
pub fn batch_mean_offset(batch: &RelativeScoreBatch) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    batch.centered.iter().sum::<f64>() / batch.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let b = center_scores(&[0.3, -0.1, -0.2]).unwrap();
        for (c, e) in b.centered.iter().zip([0.3, -0.1, -0.2]) {
            assert!((c - e).abs() < 1e-15);
        }
        assert_eq!(center_scores(&[0.7; 4]).unwrap().centered, vec![0.0; 4]);
        assert_eq!(center_scores(&[1.0]), Err(ScoreError::BatchTooSmall(1)));

        assert_eq!(var_delta(&center_scores(&[0.5; 3]).unwrap()), 0.0);
        assert_eq!(var_delta(&center_scores(&[1.0, -1.0]).unwrap()), 1.0);

        let off = uncentered_scores(&[0.2, 0.2, 0.2]).unwrap();
        assert!((batch_mean_offset(&off) - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn centered_sums_to_zero(deltas in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let b = center_scores(&deltas).unwrap();
            prop_assert!(b.centered.iter().sum::<f64>().abs() <= 1e-12);
            prop_assert!(batch_mean_offset(&b).abs() <= 1e-12);
            for i in 0..deltas.len() {
                prop_assert_eq!(b.centered[i], b.deltas[i] - b.center);
            }
        }

        #[test]
        fn shift_invariance(deltas in prop::collection::vec(-5.0f64..5.0, 2..40), shift in -3.0f64..3.0) {
            let a = center_scores(&deltas).unwrap();
            let shifted: Vec<f64> = deltas.iter().map(|d| d + shift).collect();
            let b = center_scores(&shifted).unwrap();
            for (x, y) in a.centered.iter().zip(&b.centered) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((var_delta(&a) - var_delta(&b)).abs() < 1e-10);
            let mean_sq = a.centered.iter().map(|c| c * c).sum::<f64>() / a.len() as f64;
            prop_assert!((var_delta(&a) - mean_sq).abs() < 1e-12);
        }
    }
}
