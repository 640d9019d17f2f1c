use super::OracleError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationCheck {
    pub lhs_aw: f64,
    pub lhs_rspo: f64,
    pub rhs_aw: f64,
    pub rhs_rspo: f64,
}

impl PerturbationCheck {
    pub fn holds(&self) -> bool {
        self.lhs_aw <= self.rhs_aw && self.lhs_rspo <= self.rhs_rspo
    }
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Forward-value perturbation of the AW and RSPO losses when the ideal
/// centered scores `r_hat` are replaced by `r_hat + centered(xi)`, against
/// the bounds `2 eps |A|` and `2 eps |A| + lambda (4 eps |R| + 4 eps^2)`
/// (batch-mean norms).
///
/// The RSPO forward value is `-<A, x> + lambda |x|^2`.
pub fn perturbation_bound_check(
    a_tilde: &[f64],
    r_hat: &[f64],
    xi: &[f64],
    eps: f64,
    lambda: f64,
) -> Result<PerturbationCheck, OracleError> {
    let n = a_tilde.len();
    if n == 0 || r_hat.len() != n || xi.len() != n {
        return Err(OracleError::LengthMismatch(format!(
            "advantages {n}, scores {}, errors {}",
            r_hat.len(),
            xi.len()
        )));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !(finite(a_tilde) && finite(r_hat) && finite(xi) && eps.is_finite() && lambda.is_finite()) {
        return Err(OracleError::InvalidInput("non-finite input".into()));
    }
    if eps < 0.0 || lambda < 0.0 {
        return Err(OracleError::InvalidInput("eps and lambda must be non-negative".into()));
    }
    if let Some(x) = xi.iter().find(|x| x.abs() > eps) {
        return Err(OracleError::InvalidInput(format!("|xi| = {} exceeds eps = {eps}", x.abs())));
    }

    let xi_mean = xi.iter().sum::<f64>() / n as f64;
    let delta_hat: Vec<f64> = r_hat.iter().zip(xi).map(|(r, x)| r + (x - xi_mean)).collect();

    let aw = |x: &[f64]| -inner(a_tilde, x);
    let rspo = |x: &[f64]| -inner(a_tilde, x) + lambda * inner(x, x);

    let norm_a = inner(a_tilde, a_tilde).sqrt();
    let norm_r = inner(r_hat, r_hat).sqrt();
    let rhs_aw = 2.0 * eps * norm_a;
    Ok(PerturbationCheck {
        lhs_aw: (aw(&delta_hat) - aw(r_hat)).abs(),
        lhs_rspo: (rspo(&delta_hat) - rspo(r_hat)).abs(),
        rhs_aw,
        rhs_rspo: rhs_aw + lambda * (4.0 * eps * norm_r + 4.0 * eps * eps),
    })
}
