use serde::{Deserialize, Serialize};

use super::{RelativeScoreBatch, RspoError};

/// Which surrogate a training step minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    Rspo { lambda: f64 },
    AdvantageWeighted,
    Quadratic { lambda: f64 },
}

impl Objective {
    /// RSPO for `lambda > 0`, the advantage-weighted ablation for `lambda == 0`.
    pub fn from_lambda(lambda: f64) -> Result<Self, RspoError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(RspoError::InvalidLambda(lambda));
        }
        Ok(if lambda == 0.0 {
            Objective::AdvantageWeighted
        } else {
            Objective::Rspo { lambda }
        })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Objective::Rspo { lambda } | Objective::Quadratic { lambda } => lambda,
            Objective::AdvantageWeighted => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Detached per-sample coefficients.
    pub weights: Vec<f64>,
    /// `A_i - lambda * centered_i`.
    pub residuals: Vec<f64>,
    pub gradient: Option<Vec<f64>>,
}

impl LossOutput {
    pub fn with_gradient(mut self, gradient: Vec<f64>) -> Self {
        self.gradient = Some(gradient);
        self
    }
}

fn check_lengths(batch: &RelativeScoreBatch, advantages: &[f64]) -> Result<(), RspoError> {
    if batch.is_empty() {
        return Err(RspoError::EmptyBatch);
    }
    if advantages.len() != batch.len() {
        return Err(RspoError::LengthMismatch {
            what: "advantages",
            got: advantages.len(),
            expected: batch.len(),
        });
    }
    Ok(())
}

fn check_positive(lambda: f64) -> Result<(), RspoError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(RspoError::NonPositiveLambda(lambda))
    }
}

fn residuals(advantages: &[f64], centered: &[f64], lambda: f64) -> Vec<f64> {
    advantages.iter().zip(centered).map(|(a, d)| a - lambda * d).collect()
}

/// `w_i = A_i - lambda * sg(centered_i)`.
pub fn rspo_weights(advantages: &[f64], centered: &[f64], lambda: f64) -> Result<Vec<f64>, RspoError> {
    check_positive(lambda)?;
    if advantages.len() != centered.len() {
        return Err(RspoError::LengthMismatch {
            what: "centered scores",
            got: centered.len(),
            expected: advantages.len(),
        });
    }
    Ok(residuals(advantages, centered, lambda))
}

fn weighted_loss(weights: &[f64], centered: &[f64]) -> f64 {
    -weights.iter().zip(centered).map(|(w, d)| w * d).sum::<f64>() / weights.len() as f64
}

/// `-(1/N) sum_i w_i * centered_i`. `lambda == 0` dispatches to [`aw_loss`].
pub fn rspo_loss(batch: &RelativeScoreBatch, advantages: &[f64], lambda: f64) -> Result<LossOutput, RspoError> {
    if lambda == 0.0 {
        return aw_loss(batch, advantages);
    }
    check_lengths(batch, advantages)?;
    let weights = rspo_weights(advantages, &batch.centered, lambda)?;
    Ok(LossOutput {
        loss: weighted_loss(&weights, &batch.centered),
        residuals: weights.clone(),
        weights,
        gradient: None,
    })
}

/// Advantage-weighted surrogate `-(1/N) sum_i A_i * centered_i`.
pub fn aw_loss(batch: &RelativeScoreBatch, advantages: &[f64]) -> Result<LossOutput, RspoError> {
    check_lengths(batch, advantages)?;
    Ok(LossOutput {
        loss: weighted_loss(advantages, &batch.centered),
        weights: advantages.to_vec(),
        residuals: advantages.to_vec(),
        gradient: None,
    })
}

/// Matched quadratic objective and its completed-square decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadLoss {
    /// `-<A, delta>_B + (lambda/2) ||centered||_B^2`.
    pub loss: f64,
    /// `(lambda/2) ||centered - A/lambda||_B^2`.
    pub square_term: f64,
    /// `-||A||_B^2 / (2 lambda)`.
    pub constant_term: f64,
    /// `-center * <A, 1>_B`; zero for zero-sum advantages.
    pub center_term: f64,
    /// `|loss - (square_term + constant_term + center_term)|`.
    pub identity_gap: f64,
    pub residuals: Vec<f64>,
}

pub fn quad_loss(batch: &RelativeScoreBatch, advantages: &[f64], lambda: f64) -> Result<QuadLoss, RspoError> {
    check_lengths(batch, advantages)?;
    check_positive(lambda)?;
    let n = batch.len() as f64;
    let inner = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    let loss = -inner(advantages, &batch.deltas) + 0.5 * lambda * inner(&batch.centered, &batch.centered);
    let gap: Vec<f64> = batch
        .centered
        .iter()
        .zip(advantages)
        .map(|(d, a)| d - a / lambda)
        .collect();
    let square_term = 0.5 * lambda * inner(&gap, &gap);
    let constant_term = -inner(advantages, advantages) / (2.0 * lambda);
    let center_term = -batch.center * advantages.iter().sum::<f64>() / n;
    Ok(QuadLoss {
        loss,
        square_term,
        constant_term,
        center_term,
        identity_gap: (loss - (square_term + constant_term + center_term)).abs(),
        residuals: residuals(advantages, &batch.centered, lambda),
    })
}

fn check_grads(n: usize, score_grads: &[Vec<f64>]) -> Result<usize, RspoError> {
    if score_grads.len() != n {
        return Err(RspoError::LengthMismatch {
            what: "score gradients",
            got: score_grads.len(),
            expected: n,
        });
    }
    let dim = score_grads[0].len();
    for (index, g) in score_grads.iter().enumerate() {
        if g.len() != dim {
            return Err(RspoError::GradientDimension {
                index,
                got: g.len(),
                expected: dim,
            });
        }
    }
    Ok(dim)
}

/// `-(1/N) sum_i c_i grad_i`, reduced in sample order.
fn assemble(coeffs: &[f64], score_grads: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (c, g) in coeffs.iter().zip(score_grads) {
        for (o, gi) in out.iter_mut().zip(g) {
            *o += c * gi;
        }
    }
    let scale = -1.0 / coeffs.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    out
}

/// `-(1/N) sum_i (A_i - lambda * centered_i) grad delta_i`.
pub fn rspo_gradient(
    batch: &RelativeScoreBatch,
    advantages: &[f64],
    lambda: f64,
    score_grads: &[Vec<f64>],
) -> Result<Vec<f64>, RspoError> {
    if lambda == 0.0 {
        return aw_gradient(batch, advantages, score_grads);
    }
    check_lengths(batch, advantages)?;
    let dim = check_grads(batch.len(), score_grads)?;
    let weights = rspo_weights(advantages, &batch.centered, lambda)?;
    Ok(assemble(&weights, score_grads, dim))
}

pub fn aw_gradient(
    batch: &RelativeScoreBatch,
    advantages: &[f64],
    score_grads: &[Vec<f64>],
) -> Result<Vec<f64>, RspoError> {
    check_lengths(batch, advantages)?;
    let dim = check_grads(batch.len(), score_grads)?;
    Ok(assemble(advantages, score_grads, dim))
}

/// Gradient of [`quad_loss`] with the center detached, assembled as the sum
/// of its two terms rather than through the combined residual.
pub fn quad_gradient(
    batch: &RelativeScoreBatch,
    advantages: &[f64],
    lambda: f64,
    score_grads: &[Vec<f64>],
) -> Result<Vec<f64>, RspoError> {
    check_lengths(batch, advantages)?;
    check_positive(lambda)?;
    let dim = check_grads(batch.len(), score_grads)?;
    let n = batch.len() as f64;
    let mut linear = vec![0.0; dim];
    let mut penalty = vec![0.0; dim];
    for ((a, d), g) in advantages.iter().zip(&batch.centered).zip(score_grads) {
        for j in 0..dim {
            linear[j] += a * g[j];
            penalty[j] += d * g[j];
        }
    }
    Ok(linear
        .iter()
        .zip(&penalty)
        .map(|(l, p)| -l / n + lambda * p / n)
        .collect())
}

/// `max_i |A_i - lambda * centered_i|`.
pub fn fixed_point_residual(batch: &RelativeScoreBatch, advantages: &[f64], lambda: f64) -> Result<f64, RspoError> {
    check_lengths(batch, advantages)?;
    check_positive(lambda)?;
    Ok(residuals(advantages, &batch.centered, lambda)
        .into_iter()
        .fold(0.0, |m, r| m.max(r.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{center_scores, uncentered_scores};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(deltas: &[f64]) -> RelativeScoreBatch {
        center_scores(deltas).unwrap()
    }

    fn zero_sum(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        raw.iter().map(|r| r - m).collect()
    }

    #[test]
    fn weight_examples() {
        let adv = [0.6, -0.2, -0.4];
        let at_target: Vec<f64> = adv.iter().map(|a| a / 0.5).collect();
        assert!(rspo_weights(&adv, &at_target, 0.5).unwrap().iter().all(|w| w.abs() < 1e-15));
        assert_eq!(rspo_weights(&adv, &[0.0; 3], 0.5).unwrap(), adv.to_vec());
        assert_eq!(rspo_weights(&adv, &[0.0; 3], 0.0), Err(RspoError::NonPositiveLambda(0.0)));
        assert_eq!(rspo_weights(&adv, &[0.0; 3], -1.0), Err(RspoError::NonPositiveLambda(-1.0)));
    }

    #[test]
    fn rspo_loss_example() {
        let b = batch(&[0.5, -0.5]);
        let out = rspo_loss(&b, &[1.0, -1.0], 1.0).unwrap();
        assert_eq!(out.weights, vec![0.5, -0.5]);
        assert!((out.loss + 0.25).abs() < 1e-15);
    }

    #[test]
    fn aw_loss_example_and_zero_advantages() {
        let b = batch(&[0.5, -0.5]);
        assert!((aw_loss(&b, &[1.0, -1.0]).unwrap().loss + 0.5).abs() < 1e-15);
        assert_eq!(aw_loss(&b, &[0.0, 0.0]).unwrap().loss, 0.0);
        let g = aw_gradient(&b, &[0.0, 0.0], &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lambda_zero_dispatches_to_aw() {
        let b = batch(&[0.3, -0.1, 0.5]);
        let adv = [0.2, 0.1, -0.3];
        assert_eq!(rspo_loss(&b, &adv, 0.0).unwrap(), aw_loss(&b, &adv).unwrap());
        // and the small-lambda limit approaches it
        let near = rspo_loss(&b, &adv, 1e-12).unwrap().loss;
        assert!((near - aw_loss(&b, &adv).unwrap().loss).abs() < 1e-12);
        assert_eq!(Objective::from_lambda(0.0).unwrap(), Objective::AdvantageWeighted);
        assert!(Objective::from_lambda(-0.1).is_err());
    }

    #[test]
    fn fixed_point_gives_zero_loss_and_gradient() {
        let adv = [0.5, -0.25, -0.25];
        let lambda = 0.01;
        let deltas: Vec<f64> = adv.iter().map(|a| a / lambda + 3.0).collect();
        let b = batch(&deltas);
        let out = rspo_loss(&b, &adv, lambda).unwrap();
        assert!(out.loss.abs() < 1e-12);
        let grads = vec![vec![1.0, -2.0], vec![0.5, 0.5], vec![3.0, 1.0]];
        let g = rspo_gradient(&b, &adv, lambda, &grads).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
        assert!(fixed_point_residual(&b, &adv, lambda).unwrap() < 1e-12);
    }

    #[test]
    fn residual_example() {
        let b = batch(&[0.0, 0.0]);
        assert_eq!(fixed_point_residual(&b, &[1.0, -1.0], 0.01).unwrap(), 1.0);
    }

    #[test]
    fn quad_examples() {
        let lambda = 0.2;
        let adv = [0.4, -0.1, -0.3];
        let target: Vec<f64> = adv.iter().map(|a| a / lambda).collect();
        let q = quad_loss(&batch(&target), &adv, lambda).unwrap();
        let norm2 = adv.iter().map(|a| a * a).sum::<f64>() / 3.0;
        assert!((q.loss + norm2 / (2.0 * lambda)).abs() < 1e-12);
        assert!(q.square_term.abs() < 1e-12);

        let zero = batch(&[0.0; 3]);
        let a = quad_loss(&zero, &adv, lambda).unwrap();
        let b = quad_loss(&zero, &adv, 2.0 * lambda).unwrap();
        assert_eq!(a.loss, 0.0);
        assert_eq!(b.loss, 0.0);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let b = batch(&[0.1, 0.2]);
        assert!(matches!(rspo_loss(&b, &[1.0], 0.1), Err(RspoError::LengthMismatch { .. })));
        assert!(matches!(
            rspo_gradient(&b, &[1.0, -1.0], 0.1, &[vec![1.0], vec![1.0, 2.0]]),
            Err(RspoError::GradientDimension { .. })
        ));
        assert!(matches!(
            rspo_gradient(&b, &[1.0, -1.0], 0.1, &[vec![1.0]]),
            Err(RspoError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn sign_of_update_tracks_target() {
        // A single sample's contribution to the descent direction, -grad,
        // is w_i * g_i / N: aligned with g_i below target, opposed above it.
        let lambda = 0.1;
        let adv = [0.5, -0.5];
        let g = vec![vec![1.0, 2.0], vec![0.0, 0.0]];
        for (d0, expect_up) in [(2.0, true), (8.0, false)] {
            let b = uncentered_scores(&[d0, -5.0]).unwrap();
            let grad = rspo_gradient(&b, &adv, lambda, &g).unwrap();
            let descent_dot: f64 = grad.iter().zip(&g[0]).map(|(x, y)| -x * y).sum();
            assert_eq!(descent_dot > 0.0, expect_up, "delta {d0}");
        }
    }

    #[test]
    fn gradients_agree_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let n = rng.gen_range(2..12);
            let dim = rng.gen_range(1..20);
            let adv = zero_sum(&mut rng, n);
            let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let grads: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let lambda = rng.gen_range(0.001..2.0);
            let b = batch(&deltas);
            let r = rspo_gradient(&b, &adv, lambda, &grads).unwrap();
            let q = quad_gradient(&b, &adv, lambda, &grads).unwrap();
            for (x, y) in r.iter().zip(&q) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn weights_preserve_advantage_sum(
            adv in prop::collection::vec(-1.0f64..1.0, 2..20),
            seed in any::<u64>(),
            lambda in 0.001f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let deltas: Vec<f64> = (0..adv.len()).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let b = batch(&deltas);
            let w = rspo_weights(&adv, &b.centered, lambda).unwrap();
            prop_assert!((w.iter().sum::<f64>() - adv.iter().sum::<f64>()).abs() <= 1e-12);
        }

        #[test]
        fn completed_square_identity(seed in any::<u64>(), n in 2usize..12, lambda in 0.001f64..5.0, zs: bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adv: Vec<f64> = if zs {
                zero_sum(&mut rng, n)
            } else {
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let q = quad_loss(&batch(&deltas), &adv, lambda).unwrap();
            let scale = 1.0 + q.constant_term.abs() + q.square_term.abs();
            prop_assert!(q.identity_gap <= 1e-12 * scale);
            if zs {
                prop_assert!(q.center_term.abs() <= 1e-12 * (1.0 + deltas.iter().map(|d| d.abs()).sum::<f64>()));
            }
        }

        #[test]
        fn centering_leaves_aw_value_unchanged(seed in any::<u64>(), n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adv = zero_sum(&mut rng, n);
            let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let c = aw_loss(&center_scores(&deltas).unwrap(), &adv).unwrap().loss;
            let u = aw_loss(&uncentered_scores(&deltas).unwrap(), &adv).unwrap().loss;
            prop_assert!((c - u).abs() <= 1e-12);
        }
    }
}
