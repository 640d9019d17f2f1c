use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdm::{stream_rng, TokenId};
use crate::score::{coupled_delta, draw_masks, elbo_score};

use super::{
    exact_elbo_expectation, exact_sequence_loglik, kl_proxy, kl_proxy_gap_slope, kl_regularized_optimum,
    perturbation_bound_check, OracleError, TinyInstance, TinyLimits,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub seed: u64,
    /// Instances for the Monte Carlo ELBO comparison.
    pub elbo_instances: usize,
    pub mc_masks: usize,
    /// Instances for the ELBO vs. chain likelihood report.
    pub lower_bound_instances: usize,
    pub bound_trials: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            elbo_instances: 5,
            mc_masks: 20_000,
            lower_bound_instances: 100,
            bound_trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Measured and reported; not a pass/fail property.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

fn check(name: &str, ok: bool, detail: String) -> AuditCheck {
    AuditCheck {
        name: name.into(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

fn all_sequences(vocab: usize, len: usize) -> Vec<Vec<TokenId>> {
    (0..vocab.pow(len as u32))
        .map(|mut c| {
            (0..len)
                .map(|_| {
                    let t = (c % vocab) as TokenId;
                    c /= vocab;
                    t
                })
                .collect()
        })
        .collect()
}

/// Runs every oracle against the main implementation on seeded random
/// instances. Single-threaded.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport, OracleError> {
    let limits = TinyLimits::default();
    let mut checks = Vec::new();

    let mut worst_z: f64 = 0.0;
    // Single-position completions have a zero-variance estimator.
    let instances = (0u64..)
        .map(|i| TinyInstance::random(&mut stream_rng(cfg.seed, i), 2.0))
        .filter(|inst| inst.completion.len() >= 2)
        .take(cfg.elbo_instances);
    for (i, inst) in instances.enumerate() {
        let i = i as u64;
        let exact = exact_elbo_expectation(&inst.params, &inst.prompt, &inst.completion, &limits)?;
        let masks = draw_masks(inst.completion.len(), cfg.mc_masks, &mut stream_rng(cfg.seed ^ 0xe1b0, i))
            .map_err(|e| OracleError::InvalidInput(e.to_string()))?;
        let mc = elbo_score(&inst.params, &inst.prompt, &inst.completion, &masks)
            .map_err(|e| OracleError::InvalidInput(e.to_string()))?;
        let z = (mc.value - exact).abs() / mc.standard_error();
        worst_z = worst_z.max(z);
    }
    checks.push(check(
        "elbo_monte_carlo_vs_exact",
        worst_z <= 3.0,
        format!("max |MC - exact| / SE = {worst_z:.3} over {} instances", cfg.elbo_instances),
    ));

    let mut worst_norm: f64 = 0.0;
    for i in 0..5u64 {
        let inst = TinyInstance::random(&mut stream_rng(cfg.seed ^ 0x5eed, i), 3.0);
        let total: f64 = all_sequences(inst.params.arch.num_outputs(), inst.completion.len())
            .iter()
            .map(|o| exact_sequence_loglik(&inst.params, &inst.prompt, o, 4, &limits).map(f64::exp))
            .sum::<Result<f64, _>>()?;
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    checks.push(check(
        "chain_likelihood_normalization",
        worst_norm <= 1e-10,
        format!("max |sum - 1| = {worst_norm:.2e}"),
    ));

    let mut below = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..cfg.lower_bound_instances as u64 {
        let inst = TinyInstance::random(&mut stream_rng(cfg.seed ^ 0x10b0, i), 2.0);
        let elbo = exact_elbo_expectation(&inst.params, &inst.prompt, &inst.completion, &limits)?;
        let ll = exact_sequence_loglik(&inst.params, &inst.prompt, &inst.completion, 4, &limits)?;
        if elbo <= ll + 1e-9 {
            below += 1;
        }
        max_excess = max_excess.max(elbo - ll);
    }
    checks.push(AuditCheck {
        name: "elbo_below_chain_loglik".into(),
        status: CheckStatus::Report,
        detail: format!(
            "{below}/{} instances with ELBO <= loglik(T=4) + 1e-9; max(ELBO - loglik) = {max_excess:.4}",
            cfg.lower_bound_instances
        ),
    });

    let mut rng = stream_rng(cfg.seed ^ 0xb7a, 0);
    let mut worst_identity: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let pi_ref: Vec<f64> = raw.iter().map(|x| x / z).collect();
        let beta = 10f64.powf(rng.gen_range(-1.0..1.0));
        worst_identity = worst_identity.max(kl_regularized_optimum(&pi_ref, &rewards, beta)?.centered_identity_error);
    }
    checks.push(check(
        "kl_optimum_centered_identity",
        worst_identity <= 1e-12,
        format!("max error {worst_identity:.2e} over 100 draws"),
    ));

    let (fwd, rev) = kl_proxy_gap_slope(&[0.2, 0.3, 0.5], &[1.0, 0.0, 0.0], &[0.04, 0.02, 0.01, 0.005])?;
    checks.push(check(
        "kl_proxy_cubic_gap",
        (2.7..=3.3).contains(&fwd),
        format!("fitted slope forward {fwd:.3}, reverse {rev:.3}"),
    ));
    let binary = kl_proxy(&[0.5, 0.5], &[0.51, 0.49])?;
    checks.push(AuditCheck {
        name: "kl_proxy_binary".into(),
        status: CheckStatus::Report,
        detail: format!(
            "KL = {:.6e}, half var = {:.6e}, gap = {:.2e}",
            binary.kl_pq, binary.half_var, binary.gap_forward
        ),
    });

    let mut rng = stream_rng(cfg.seed ^ 0xd6, 0);
    let mut violations = 0;
    for _ in 0..cfg.bound_trials {
        let (n, eps, lambda) = (6, 0.1, 0.01);
        let a = centered((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let r = centered((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-eps..=eps)).collect();
        if !perturbation_bound_check(&a, &r, &xi, eps, lambda)?.holds() {
            violations += 1;
        }
    }
    checks.push(check(
        "perturbation_bound",
        violations == 0,
        format!("{violations} violations in {} trials", cfg.bound_trials),
    ));

    let inst = TinyInstance::random(&mut stream_rng(cfg.seed ^ 0xc0, 0), 2.0);
    let cd = coupled_delta(&inst.params, &inst.params, &inst.prompt, &inst.completion, 8, &mut stream_rng(cfg.seed, 1))
        .map_err(|e| OracleError::InvalidInput(e.to_string()))?;
    checks.push(check(
        "coupled_delta_identical_models",
        cd.delta == 0.0,
        format!("delta = {:e}", cd.delta),
    ));

    Ok(AuditReport { checks })
}

fn centered(mut v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}
