use super::OracleError;

#[derive(Debug, Clone, PartialEq)]
pub struct KlOptimum {
    pub pi_star: Vec<f64>,
    /// `log(pi_star / pi_ref) = r / beta - log Z`.
    pub delta_star: Vec<f64>,
    pub log_z: f64,
    /// `max_i |(delta_i - mean delta) - (r_i - mean r) / beta|`.
    pub centered_identity_error: f64,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_distribution(p: &[f64], name: &str) -> Result<(), OracleError> {
    if p.is_empty() {
        return Err(OracleError::InvalidDistribution(format!("{name} is empty")));
    }
    if let Some(i) = p.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(OracleError::InvalidDistribution(format!("{name}[{i}] = {}", p[i])));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(OracleError::InvalidDistribution(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// `pi* = pi_ref exp(r / beta) / Z` over an explicit completion list, with
/// the log-ratio `Delta*` and a check of the centered identity on the list.
pub fn kl_regularized_optimum(pi_ref: &[f64], rewards: &[f64], beta: f64) -> Result<KlOptimum, OracleError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(OracleError::NonPositiveBeta(beta));
    }
    check_distribution(pi_ref, "pi_ref")?;
    if rewards.len() != pi_ref.len() {
        return Err(OracleError::LengthMismatch(format!(
            "{} rewards for {} completions",
            rewards.len(),
            pi_ref.len()
        )));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(OracleError::InvalidInput("non-finite reward".into()));
    }
    let logits: Vec<f64> = pi_ref
        .iter()
        .zip(rewards)
        .map(|(p, r)| p.ln() + r / beta)
        .collect();
    let log_z = log_sum_exp(&logits);
    let pi_star = logits.iter().map(|l| (l - log_z).exp()).collect();
    let delta_star: Vec<f64> = rewards.iter().map(|r| r / beta - log_z).collect();

    let n = rewards.len() as f64;
    let mean_delta = delta_star.iter().sum::<f64>() / n;
    let mean_r = rewards.iter().sum::<f64>() / n;
    let centered_identity_error = delta_star
        .iter()
        .zip(rewards)
        .map(|(d, r)| ((d - mean_delta) - (r - mean_r) / beta).abs())
        .fold(0.0, f64::max);
    Ok(KlOptimum {
        pi_star,
        delta_star,
        log_z,
        centered_identity_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlProxy {
    pub kl_pq: f64,
    pub kl_qp: f64,
    /// `Var_{Y~P}(log Q/P) / 2`.
    pub half_var: f64,
    pub gap_forward: f64,
    pub gap_reverse: f64,
}

pub fn kl_proxy(p: &[f64], q: &[f64]) -> Result<KlProxy, OracleError> {
    check_distribution(p, "P")?;
    check_distribution(q, "Q")?;
    if p.len() != q.len() {
        return Err(OracleError::LengthMismatch(format!("{} vs {} outcomes", p.len(), q.len())));
    }
    if let Some(i) = p.iter().zip(q).position(|(a, b)| (*a > 0.0) != (*b > 0.0)) {
        return Err(OracleError::SupportMismatch(i));
    }
    let support: Vec<(f64, f64)> = p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| (*a, *b)).collect();
    let kl_pq: f64 = support.iter().map(|(a, b)| a * (a / b).ln()).sum();
    let kl_qp: f64 = support.iter().map(|(a, b)| b * (b / a).ln()).sum();
    let mean: f64 = support.iter().map(|(a, b)| a * (b / a).ln()).sum();
    let var: f64 = support.iter().map(|(a, b)| a * ((b / a).ln() - mean).powi(2)).sum();
    let half_var = 0.5 * var;
    Ok(KlProxy {
        kl_pq,
        kl_qp,
        half_var,
        gap_forward: (kl_pq - half_var).abs(),
        gap_reverse: (kl_qp - half_var).abs(),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Tilts `p` to `Q ∝ P exp(eps * v)` for each `eps` and fits the log-log
/// slope of the forward and reverse gaps against `eps`.
pub fn kl_proxy_gap_slope(p: &[f64], v: &[f64], eps: &[f64]) -> Result<(f64, f64), OracleError> {
    if v.len() != p.len() {
        return Err(OracleError::LengthMismatch("direction length".into()));
    }
    let mut fwd = Vec::with_capacity(eps.len());
    let mut rev = Vec::with_capacity(eps.len());
    for &e in eps {
        let unnorm: Vec<f64> = p.iter().zip(v).map(|(a, d)| a * (e * d).exp()).collect();
        let z: f64 = unnorm.iter().sum();
        let q: Vec<f64> = unnorm.iter().map(|x| x / z).collect();
        let k = kl_proxy(p, &q)?;
        fwd.push(k.gap_forward);
        rev.push(k.gap_reverse);
    }
    Ok((loglog_slope(eps, &fwd), loglog_slope(eps, &rev)))
}
