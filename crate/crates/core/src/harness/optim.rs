use super::HarnessError;

/// Adam with bias correction and optional decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub state: AdamState,
}

/// First and second moments and the number of updates taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

impl Adam {
    pub fn new(dim: usize, lr: f64, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            state: AdamState::zeros(dim),
        }
    }

    /// One update of `params` in place. A non-finite gradient leaves both
    /// parameters and moments untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), HarnessError> {
        adam_update(
            params,
            grad,
            &mut self.state,
            self.lr,
            (self.beta1, self.beta2),
            self.eps,
            self.weight_decay,
        )
    }
}

pub fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    (beta1, beta2): (f64, f64),
    eps: f64,
    weight_decay: f64,
) -> Result<(), HarnessError> {
    if params.len() != grad.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(HarnessError::Optimizer(format!(
            "dimension mismatch: params {}, grad {}, moments {}/{}",
            params.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(HarnessError::Optimizer(format!("non-finite gradient at coordinate {i}")));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *p);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.2];
        let mut opt = Adam::new(2, 0.1, (0.9, 0.99), 1e-8, 0.0);
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, 0.1, (0.9, 0.99), 1e-8, 0.0);
        opt.step(&mut p, &[1.0]).unwrap();
        // m_hat = 1, v_hat = 1 -> -lr * 1 / (1 + 1e-8)
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
        assert!((p[0] + 0.1).abs() < 1e-8);
        assert_eq!(opt.state.t, 1);
    }

    #[test]
    fn second_step_by_hand() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, 0.1, (0.9, 0.99), 1e-8, 0.0);
        opt.step(&mut p, &[1.0]).unwrap();
        opt.step(&mut p, &[-2.0]).unwrap();
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.99 * 0.01 + 0.01 * 4.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.9801);
        let want = -0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn decoupled_decay_shrinks_params() {
        let mut p = vec![2.0];
        let mut opt = Adam::new(1, 0.1, (0.9, 0.99), 1e-8, 0.5);
        opt.step(&mut p, &[0.0]).unwrap();
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = vec![1.0];
        let mut opt = Adam::new(1, 0.1, (0.9, 0.99), 1e-8, 0.0);
        assert!(opt.step(&mut p, &[f64::NAN]).is_err());
        assert!(opt.step(&mut p, &[1.0, 2.0]).is_err());
        assert_eq!(opt.state, AdamState::zeros(1));
        assert_eq!(p, vec![1.0]);
    }
}
