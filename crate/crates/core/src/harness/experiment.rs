use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{config_from_map, write_checkpoint, HarnessError, MetricsWriter, RunConfig, StepMetrics, TrainCheckpoint, Trainer};
use crate::tasks::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: TaskKind,
    pub steps: usize,
    pub lambda: f64,
    pub centering: bool,
    pub reference: bool,
    pub normalize_adv: bool,
    pub seed: u64,
    pub config_hash: String,
    /// Greedy eval reward of the initial parameters.
    pub init_eval_reward: f64,
    /// Greedy eval reward after the last step.
    pub final_eval_reward: f64,
    /// Eval step with the highest greedy reward (earliest on ties).
    pub best_step: usize,
    pub best_eval_reward: f64,
    /// Sampled (rollout temperature) eval reward before and after training.
    pub init_sampled_reward: f64,
    pub final_sampled_reward: f64,
    /// Training-batch reward of the last step, if any step ran.
    pub final_train_reward: Option<f64>,
    pub mean_last10_var_delta: Option<f64>,
    pub mean_abs_batch_mean_offset: Option<f64>,
    pub reference_fingerprint_initial: String,
    pub reference_fingerprint_final: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub metrics: Vec<StepMetrics>,
    pub checkpoint: TrainCheckpoint,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn matrix_field<T: serde::de::DeserializeOwned>(v: Value, name: &str) -> Result<T, HarnessError> {
    serde_json::from_value(v).map_err(|e| HarnessError::Config(vec![format!("{name}: {e}")]))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn save_checkpoint(dir: &Path, name: &str, ckpt: &TrainCheckpoint) -> Result<(), HarnessError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    write_checkpoint(&mut BufWriter::new(file), ckpt)
}

/// Runs `cfg.steps` training steps. With `out_dir` set, writes
/// `config.json`, `metrics.jsonl`, `timing.jsonl`, periodic checkpoints,
/// `ckpt_final.bin` and `summary.json` there; a non-finite loss or gradient
/// writes `abort.json` and returns the error.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let out = cfg.out_dir.as_ref().map(PathBuf::from);
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_json(&dir.join("config.json"), cfg)?;
    }
    let mut writer = out.as_deref().map(MetricsWriter::create).transpose()?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let ref_initial = trainer.reference.fingerprint();

    let rollout_temp = cfg.rollout_temperature();
    let init_eval = trainer.evaluate(cfg.eval_temperature, 1)?;
    let init_sampled = trainer.evaluate(rollout_temp, cfg.eval_samples)?;
    let (mut best_step, mut best_eval) = (0, init_eval);
    let mut last_eval = init_eval;
    let mut metrics = Vec::with_capacity(cfg.steps);

    while trainer.step < cfg.steps {
        let m = match trainer.train_step() {
            Ok(m) => m,
            Err(e) => {
                if let (Some(dir), HarnessError::NonFinite { step, .. } | HarnessError::ZeroSum { step, .. }) = (&out, &e) {
                    let record = serde_json::json!({ "step": step, "error": e.to_string() });
                    write_json(&dir.join("abort.json"), &record)?;
                }
                return Err(e);
            }
        };
        if let Some(w) = writer.as_mut() {
            w.write(&m)?;
        }
        metrics.push(m);
        let done = trainer.step;
        let at_checkpoint = cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0;
        if at_checkpoint || done == cfg.steps {
            last_eval = trainer.evaluate(cfg.eval_temperature, 1)?;
            if last_eval > best_eval {
                best_eval = last_eval;
                best_step = done;
            }
        }
        if let (Some(dir), true) = (&out, at_checkpoint) {
            save_checkpoint(dir, &format!("ckpt_{done:06}.bin"), &trainer.checkpoint())?;
        }
    }

    let final_sampled = if cfg.steps == 0 {
        init_sampled
    } else {
        trainer.evaluate(rollout_temp, cfg.eval_samples)?
    };
    let tail = metrics.len().saturating_sub(10);
    let summary = RunSummary {
        task: cfg.task,
        steps: cfg.steps,
        lambda: cfg.lambda,
        centering: cfg.centering,
        reference: cfg.reference,
        normalize_adv: cfg.normalize_adv,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        init_eval_reward: init_eval,
        final_eval_reward: last_eval,
        best_step,
        best_eval_reward: best_eval,
        init_sampled_reward: init_sampled,
        final_sampled_reward: final_sampled,
        final_train_reward: metrics.last().map(|m| m.mean_reward),
        mean_last10_var_delta: mean(metrics[tail..].iter().map(|m| m.var_delta)),
        mean_abs_batch_mean_offset: mean(metrics.iter().map(|m| m.batch_mean_offset.abs())),
        reference_fingerprint_initial: ref_initial,
        reference_fingerprint_final: trainer.reference.fingerprint(),
    };
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = &out {
        save_checkpoint(dir, "ckpt_final.bin", &checkpoint)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(RunOutcome {
        summary,
        metrics,
        checkpoint,
    })
}

/// Grid over objective coefficient, centering and reference subtraction.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationMatrix {
    pub base: RunConfig,
    pub lambdas: Vec<f64>,
    pub centering: Vec<bool>,
    pub reference: Vec<bool>,
}

impl AblationMatrix {
    pub fn with_base(base: RunConfig) -> Self {
        Self {
            base,
            lambdas: vec![0.0, 0.01, 1.0],
            centering: vec![true, false],
            reference: vec![true, false],
        }
    }

    pub fn runs(&self) -> Vec<(String, RunConfig)> {
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            for &centering in &self.centering {
                for &reference in &self.reference {
                    let onoff = |b: bool| if b { "on" } else { "off" };
                    let name = format!("lambda-{lambda}_center-{}_ref-{}", onoff(centering), onoff(reference));
                    out.push((
                        name,
                        RunConfig {
                            lambda,
                            centering,
                            reference,
                            ..self.base.clone()
                        },
                    ));
                }
            }
        }
        out
    }
}

/// Matrix file: `{"base": {flat config}, "lambdas": [...], "centering":
/// [...], "reference": [...]}`; every key optional.
pub fn parse_ablation_matrix(text: &str) -> Result<AblationMatrix, HarnessError> {
    let bad = |m: String| HarnessError::Config(vec![m]);
    let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(bad("ablation matrix must be a JSON object".into()));
    };
    let unknown: Vec<String> = map
        .keys()
        .filter(|k| !["base", "lambdas", "centering", "reference"].contains(&k.as_str()))
        .map(|k| format!("unknown matrix key {k:?}"))
        .collect();
    if !unknown.is_empty() {
        return Err(HarnessError::Config(unknown));
    }
    let base = match map.remove("base") {
        None => RunConfig::default(),
        Some(Value::Object(m)) => config_from_map(m)?,
        Some(_) => return Err(bad("\"base\" must be an object".into())),
    };
    let mut matrix = AblationMatrix::with_base(base);
    if let Some(v) = map.remove("lambdas") {
        matrix.lambdas = matrix_field(v, "lambdas")?;
    }
    if let Some(v) = map.remove("centering") {
        matrix.centering = matrix_field(v, "centering")?;
    }
    if let Some(v) = map.remove("reference") {
        matrix.reference = matrix_field(v, "reference")?;
    }
    if let Some(l) = matrix.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(bad(format!("lambdas: {l} is not a finite non-negative number")));
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub summary: RunSummary,
}

/// Runs every cell sequentially. With `out_dir`, each run writes into its own
/// subdirectory and the table goes to `ablation.json`.
pub fn run_ablation(matrix: &AblationMatrix, out_dir: Option<&Path>) -> Result<Vec<AblationRow>, HarnessError> {
    let mut rows = Vec::new();
    for (name, mut cfg) in matrix.runs() {
        cfg.out_dir = out_dir.map(|d| d.join(&name).to_string_lossy().into_owned());
        let outcome = run_experiment(&cfg)?;
        rows.push(AblationRow {
            name,
            summary: outcome.summary,
        });
    }
    if let Some(dir) = out_dir {
        let table: Vec<Map<String, Value>> = rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("name".into(), r.name.clone().into());
                if let Value::Object(s) = serde_json::to_value(&r.summary).expect("serializable") {
                    m.extend(s);
                }
                m
            })
            .collect();
        write_json(&dir.join("ablation.json"), &table)?;
    }
    Ok(rows)
}
