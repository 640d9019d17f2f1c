//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use rspo_core::harness::{run_experiment, RunConfig, RunOutcome};
use rspo_core::mdm::{stream_rng, Architecture, DenoiserParams, TokenId};
use rspo_core::oracle::{
    exact_elbo_expectation, kl_proxy, kl_proxy_gap_slope, kl_regularized_optimum, perturbation_bound_check,
    TinyInstance, TinyLimits,
};
use rspo_core::rspo::{
    aw_gradient, aw_loss, batch_advantages, fixed_point_residual, quad_gradient, rspo_gradient, AdvantageConfig,
};
use rspo_core::score::{
    center_scores, coupled_delta, draw_masks, elbo_score, relative_score, uncentered_scores, MaskSample,
};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Zero-sum group advantages from random rewards.
fn random_advantages(rng: &mut ChaCha8Rng, groups: usize, size: usize, binary: bool) -> Vec<f64> {
    let rewards: Vec<Vec<f64>> = (0..groups)
        .map(|_| {
            (0..size)
                .map(|_| if binary { rng.gen_range(0..2) as f64 } else { rng.gen::<f64>() })
                .collect()
        })
        .collect();
    batch_advantages(&rewards, &AdvantageConfig::default()).unwrap().advantages
}

fn tiny_arch() -> Architecture {
    Architecture {
        vocab_size: 4,
        window: 2,
        hidden: 6,
        embed_dim: 3,
        positions: 3,
        prompt_positions: 2,
    }
}

fn random_params(rng: &mut ChaCha8Rng, arch: Architecture, scale: f64) -> DenoiserParams {
    let theta = (0..arch.num_params()).map(|_| rng.gen_range(-scale..=scale)).collect();
    DenoiserParams::from_theta(arch, theta).unwrap()
}

struct FdBatch {
    prompts: Vec<Vec<TokenId>>,
    completions: Vec<Vec<TokenId>>,
    masks: Vec<Vec<MaskSample>>,
}

fn forward_deltas(cur: &DenoiserParams, reference: &DenoiserParams, b: &FdBatch) -> Vec<f64> {
    b.completions
        .iter()
        .zip(&b.masks)
        .zip(&b.prompts)
        .map(|((o, m), p)| {
            let e_cur = elbo_score(cur, p, o, m).unwrap().value;
            let e_ref = elbo_score(reference, p, o, m).unwrap().value;
            (e_cur - e_ref) / o.len() as f64
        })
        .collect()
}

fn c1_gradient_identity() -> Outcome {
    let start = Instant::now();
    let arch = tiny_arch();
    let (groups, size, h) = (2, 3, 1e-5);
    let mut worst: f64 = 0.0;
    for config in 0..50u64 {
        let mut rng = stream_rng(101, config);
        let cur = random_params(&mut rng, arch, 1.0);
        let reference = random_params(&mut rng, arch, 1.0);
        let lambda = [0.01, 0.1, 1.0][config as usize % 3];
        let n = groups * size;
        let mut b = FdBatch {
            prompts: Vec::new(),
            completions: Vec::new(),
            masks: Vec::new(),
        };
        for i in 0..n {
            if i % size == 0 {
                let plen = rng.gen_range(1..=2);
                b.prompts.push((0..plen).map(|_| rng.gen_range(0..3)).collect());
            }
            let len = rng.gen_range(1..=3);
            let o: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..3)).collect();
            b.masks.push(draw_masks(len, 2, &mut rng).unwrap());
            b.completions.push(o);
        }
        let prompts_per_sample: Vec<Vec<TokenId>> = (0..n).map(|i| b.prompts[i / size].clone()).collect();
        let b = FdBatch {
            prompts: prompts_per_sample,
            ..b
        };
        let adv = random_advantages(&mut rng, groups, size, false);

        let scored: Vec<_> = (0..n)
            .map(|i| relative_score(&cur, Some(&reference), &b.prompts[i], &b.completions[i], &b.masks[i]).unwrap())
            .collect();
        let deltas: Vec<f64> = scored.iter().map(|s| s.delta).collect();
        let batch = center_scores(&deltas).unwrap();
        let grads: Vec<Vec<f64>> = scored.iter().map(|s| s.grad.clone()).collect();
        let analytic = rspo_gradient(&batch, &adv, lambda, &grads).unwrap();

        // Surrogate with the weights and the center frozen at the current point.
        let weights: Vec<f64> = adv.iter().zip(&batch.centered).map(|(a, d)| a - lambda * d).collect();
        let surrogate = |p: &DenoiserParams| {
            let d = forward_deltas(p, &reference, &b);
            -weights.iter().zip(&d).map(|(w, x)| w * (x - batch.center)).sum::<f64>() / n as f64
        };
        let mut numeric = vec![0.0; cur.num_params()];
        let mut probe = cur.clone();
        for j in 0..numeric.len() {
            let x = cur.theta[j];
            probe.theta[j] = x + h;
            let up = surrogate(&probe);
            probe.theta[j] = x - h;
            let down = surrogate(&probe);
            probe.theta[j] = x;
            numeric[j] = (up - down) / (2.0 * h);
        }
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&analytic).max(1e-12));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over 50 configs (tol 1e-4), {secs:.1}s"),
    )
}

fn random_batch(rng: &mut ChaCha8Rng, n_groups: usize, size: usize, dim: usize) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = n_groups * size;
    let deltas: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let adv = random_advantages(rng, n_groups, size, true);
    let grads = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    (deltas, adv, grads)
}

fn c2_first_order_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = stream_rng(202, trial);
        let (groups, size) = (rng.gen_range(1..=4), rng.gen_range(2..=8));
        let dim = rng.gen_range(1..=40);
        let (deltas, adv, grads) = random_batch(&mut rng, groups, size, dim);
        let lambda = 10f64.powf(rng.gen_range(-3.0..1.0));
        let batch = center_scores(&deltas).unwrap();
        let r = rspo_gradient(&batch, &adv, lambda, &grads).unwrap();
        let q = quad_gradient(&batch, &adv, lambda, &grads).unwrap();
        worst = worst.max(max_abs_diff(&r, &q));
    }
    verdict(worst <= 1e-12, format!("max |rspo - quad| {worst:.2e} over 100 batches (tol 1e-12)"))
}

fn c3_reference_point() -> Outcome {
    let arch = Architecture {
        positions: 4,
        ..tiny_arch()
    };
    let mut bitwise = true;
    for trial in 0..20u64 {
        let mut rng = stream_rng(303, trial);
        let params = random_params(&mut rng, arch, 1.0);
        let reference = params.clone();
        let prompt: Vec<TokenId> = vec![rng.gen_range(0..3), rng.gen_range(0..3)];
        let n = 6;
        let scored: Vec<_> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=4);
                let o: Vec<TokenId> = (0..len).map(|_| rng.gen_range(0..3)).collect();
                let masks = draw_masks(len, 3, &mut rng).unwrap();
                relative_score(&params, Some(&reference), &prompt, &o, &masks).unwrap()
            })
            .collect();
        let deltas: Vec<f64> = scored.iter().map(|s| s.delta).collect();
        let grads: Vec<Vec<f64>> = scored.into_iter().map(|s| s.grad).collect();
        let adv = random_advantages(&mut rng, 2, 3, true);
        let batch = center_scores(&deltas).unwrap();
        let r = rspo_gradient(&batch, &adv, 0.01 + trial as f64 * 0.1, &grads).unwrap();
        let a = aw_gradient(&batch, &adv, &grads).unwrap();
        bitwise &= r.iter().zip(&a).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = stream_rng(304, trial);
        let (deltas, adv, _) = random_batch(&mut rng, 3, 4, 1);
        let c = aw_loss(&center_scores(&deltas).unwrap(), &adv).unwrap().loss;
        let u = aw_loss(&uncentered_scores(&deltas).unwrap(), &adv).unwrap().loss;
        worst = worst.max((c - u).abs());
    }
    verdict(
        bitwise && worst <= 1e-12,
        format!("RSPO == AW bitwise at reference: {bitwise}; centered vs uncentered AW {worst:.2e} (tol 1e-12)"),
    )
}

fn c4_fixed_point() -> Outcome {
    let mut worst_constructed: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = stream_rng(404, trial);
        let (_, adv, grads) = random_batch(&mut rng, 2, 4, 12);
        let lambda = [0.01, 0.1, 1.0][trial as usize % 3];
        let shift = rng.gen_range(-1.0..1.0);
        let deltas: Vec<f64> = adv.iter().map(|a| a / lambda + shift).collect();
        let g = rspo_gradient(&center_scores(&deltas).unwrap(), &adv, lambda, &grads).unwrap();
        worst_constructed = worst_constructed.max(norm(&g));
    }

    // Linear score model delta = X theta with N <= d; solve for the fixed
    // point and check that a vanishing gradient means vanishing residuals.
    let (n, d, lambda) = (6, 10, 0.1);
    let mut worst_grad: f64 = 0.0;
    let mut worst_resid: f64 = 0.0;
    let mut implication = true;
    for trial in 0..20u64 {
        let mut rng = stream_rng(405, trial);
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let adv = random_advantages(&mut rng, 2, 3, false);
        let mean = x.row_mean();
        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            row -= &mean;
        }
        let target = DVector::from_iterator(n, adv.iter().map(|a| a / lambda));
        let theta = xc.clone().svd(true, true).solve(&target, 1e-12).unwrap();
        let deltas: Vec<f64> = (&x * &theta).iter().copied().collect();
        let grads: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let batch = center_scores(&deltas).unwrap();
        let g = norm(&rspo_gradient(&batch, &adv, lambda, &grads).unwrap());
        let resid = fixed_point_residual(&batch, &adv, lambda).unwrap();
        worst_grad = worst_grad.max(g);
        worst_resid = worst_resid.max(resid);
        if g <= 1e-10 && resid > 1e-8 {
            implication = false;
        }
    }
    verdict(
        worst_constructed <= 1e-12 && worst_grad <= 1e-10 && implication,
        format!(
            "constructed |grad| {worst_constructed:.2e} (tol 1e-12); linear model |grad| {worst_grad:.2e}, \
             max residual {worst_resid:.2e} (tol 1e-8)"
        ),
    )
}

/// Arith run at a size that trains in a few seconds.
fn smoke_config(seed: u64, steps: usize) -> RunConfig {
    RunConfig {
        modulus: 5,
        steps,
        seed,
        debug_checks: true,
        ..RunConfig::default()
    }
}

fn run(cfg: &RunConfig) -> Result<RunOutcome, String> {
    run_experiment(cfg).map_err(|e| e.to_string())
}

fn c5_zero_sum() -> Outcome {
    let out = run(&smoke_config(5, 500))?;
    let max_c = out.metrics.iter().fold(0.0f64, |m, s| m.max(s.sum_centered.abs()));
    let max_w = out.metrics.iter().fold(0.0f64, |m, s| m.max(s.sum_weights.abs()));
    verdict(
        out.metrics.len() == 500 && max_c <= 1e-12 && max_w <= 1e-12,
        format!("{} steps, max |sum centered| {max_c:.2e}, max |sum w| {max_w:.2e} (tol 1e-12)", out.metrics.len()),
    )
}

fn c6_estimator() -> Outcome {
    let limits = TinyLimits::default();
    let k = 100_000;
    let mut worst_z: f64 = 0.0;
    let mut coupled_zero = true;
    // Length-1 completions have a single mask set and a zero-variance
    // estimator, so they say nothing about the standard error; skip them.
    let instances: Vec<TinyInstance> = (0u64..)
        .map(|i| TinyInstance::random(&mut stream_rng(606, i), 2.0))
        .filter(|inst| inst.completion.len() >= 2)
        .take(20)
        .collect();
    for (i, inst) in instances.iter().enumerate() {
        let i = i as u64;
        let exact = exact_elbo_expectation(&inst.params, &inst.prompt, &inst.completion, &limits).map_err(|e| e.to_string())?;
        let masks = draw_masks(inst.completion.len(), k, &mut stream_rng(607, i)).unwrap();
        let est = elbo_score(&inst.params, &inst.prompt, &inst.completion, &masks).unwrap();
        let z = (est.value - exact).abs() / est.standard_error();
        worst_z = worst_z.max(z);
        let cd = coupled_delta(&inst.params, &inst.params.clone(), &inst.prompt, &inst.completion, 16, &mut stream_rng(608, i))
            .unwrap();
        coupled_zero &= cd.delta == 0.0;
    }
    verdict(
        worst_z <= 3.0 && coupled_zero,
        format!("max |MC - exact| / SE {worst_z:.2} over 20 instances (tol 3); coupled delta exactly 0: {coupled_zero}"),
    )
}

fn c7_kl_proxy() -> Outcome {
    let eps = [0.04, 0.02, 0.01, 0.005];
    let (slope, _) = kl_proxy_gap_slope(&[0.2, 0.3, 0.5], &[1.0, 0.0, 0.0], &eps).map_err(|e| e.to_string())?;
    let k = kl_proxy(&[0.5, 0.5], &[0.51, 0.49]).map_err(|e| e.to_string())?;
    let kl_hand = 0.5 * (0.5f64 / 0.51).ln() + 0.5 * (0.5f64 / 0.49).ln();
    let (l1, l2) = ((0.51f64 / 0.5).ln(), (0.49f64 / 0.5).ln());
    let half_var_hand = 0.5 * ((l1 - l2) / 2.0).powi(2);
    let err = (k.kl_pq - kl_hand).abs().max((k.half_var - half_var_hand).abs());
    verdict(
        (2.7..=3.3).contains(&slope) && err <= 1e-8,
        format!(
            "gap slope {slope:.3} (range [2.7, 3.3]); KL {:.6e}, half var {:.6e}, hand error {err:.1e} (tol 1e-8)",
            k.kl_pq, k.half_var
        ),
    )
}

fn c8_perturbation_bound() -> Outcome {
    let mut violations = 0;
    let mut tightest: f64 = 0.0;
    for trial in 0..10_000u64 {
        let mut rng = stream_rng(808, trial);
        let (groups, size) = (rng.gen_range(1..=4), rng.gen_range(2..=6));
        let n = groups * size;
        let binary = rng.gen_bool(0.5);
        let adv = random_advantages(&mut rng, groups, size, binary);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r_hat = center_scores(&raw).unwrap().centered;
        let eps = rng.gen_range(0.0..1.0);
        let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-eps..=eps)).collect();
        let lambda = rng.gen_range(0.0..2.0);
        let c = perturbation_bound_check(&adv, &r_hat, &xi, eps, lambda).map_err(|e| e.to_string())?;
        if !c.holds() {
            violations += 1;
        }
        if c.rhs_rspo > 0.0 {
            tightest = tightest.max(c.lhs_rspo / c.rhs_rspo);
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations in 10000 trials; largest RSPO lhs/rhs {tightest:.3}"),
    )
}

fn c9_centered_target() -> Outcome {
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = stream_rng(909, trial);
        let n = rng.gen_range(2..=10);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pi_ref: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let beta = 10f64.powf(rng.gen_range(-1.0..1.0));
        let opt = kl_regularized_optimum(&pi_ref, &rewards, beta).map_err(|e| e.to_string())?;
        let log_ratio: Vec<f64> = opt.pi_star.iter().zip(&pi_ref).map(|(p, q)| (p / q).ln()).collect();
        let lr_mean = log_ratio.iter().sum::<f64>() / n as f64;
        let r_mean = rewards.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            worst = worst.max((log_ratio[i] - lr_mean - (rewards[i] - r_mean) / beta).abs());
        }
        worst = worst.max(opt.centered_identity_error);
    }
    verdict(worst <= 1e-12, format!("max identity error {worst:.2e} over 100 draws (tol 1e-12)"))
}

fn c10_centering_ablation() -> Outcome {
    let on = run(&smoke_config(10, 500))?.summary.mean_abs_batch_mean_offset.unwrap();
    let off = run(&RunConfig {
        centering: false,
        ..smoke_config(10, 500)
    })?
    .summary
    .mean_abs_batch_mean_offset
    .unwrap();
    let gap = (off / on.max(f64::MIN_POSITIVE)).log10();
    verdict(
        on <= 1e-10 && gap >= 6.0,
        format!("mean |offset| on {on:.2e} (tol 1e-10), off {off:.2e}, gap {gap:.1} orders (need 6)"),
    )
}

fn c11_training_smoke() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut improved = 0;
    for seed in 0..3 {
        let s = run(&smoke_config(seed, 200))?.summary;
        if s.final_sampled_reward > s.init_sampled_reward {
            improved += 1;
        }
        lines.push(format!("seed {seed} {:.3}->{:.3}", s.init_sampled_reward, s.final_sampled_reward));
    }
    let aw = run(&RunConfig {
        lambda: 0.0,
        ..smoke_config(0, 200)
    });
    let aw_ok = match &aw {
        Ok(o) => o.metrics.len() == 200 && o.metrics.iter().all(|m| m.loss.is_finite() && m.grad_norm.is_finite()),
        Err(_) => false,
    };
    let secs = start.elapsed().as_secs_f64();
    verdict(
        improved == 3 && aw_ok && secs <= 600.0,
        format!(
            "eval reward {} ({improved}/3 improved); lambda=0 run finite: {aw_ok}; {secs:.1}s",
            lines.join(", ")
        ),
    )
}

fn c12_determinism() -> Outcome {
    let read = |dir: &tempfile::TempDir| -> Result<Vec<u8>, String> {
        let cfg = RunConfig {
            out_dir: Some(dir.path().to_string_lossy().into_owned()),
            ..smoke_config(12, 40)
        };
        run(&cfg)?;
        std::fs::read(dir.path().join("metrics.jsonl")).map_err(|e| e.to_string())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ma, mb) = (read(&a)?, read(&b)?);
    verdict(
        !ma.is_empty() && ma == mb,
        format!("metrics.jsonl {} bytes, identical: {}", ma.len(), ma == mb),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("C1 gradient identity", c1_gradient_identity),
        ("C2 first-order equivalence", c2_first_order_equivalence),
        ("C3 reference-point equality", c3_reference_point),
        ("C4 fixed point", c4_fixed_point),
        ("C5 zero-sum", c5_zero_sum),
        ("C6 estimator exactness", c6_estimator),
        ("C7 KL proxy", c7_kl_proxy),
        ("C8 perturbation bound", c8_perturbation_bound),
        ("C9 centered KL target", c9_centered_target),
        ("C10 centering ablation", c10_centering_ablation),
        ("C11 training smoke", c11_training_smoke),
        ("C12 determinism", c12_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
