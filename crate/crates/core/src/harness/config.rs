use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::HarnessError;
use crate::mdm::DecodeConfig;
use crate::rspo::{AdvantageConfig, DEFAULT_LAMBDA};
use crate::tasks::{RewardMode, RewardSpec, TaskKind, TaskParams};

/// Flat run configuration. Every key is optional in the file; missing keys
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// 0 selects the advantage-weighted objective.
    pub lambda: f64,
    pub group_size: usize,
    pub k_masks: usize,
    /// Prompt groups per optimizer step.
    pub groups_per_batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub gen_len: usize,
    pub block_size: usize,
    pub unmask_per_step: usize,
    /// Rollout temperature; `null` picks the task default (0.3 for sudoku4,
    /// 0.9 otherwise).
    pub temperature: Option<f64>,
    pub eval_temperature: f64,
    pub centering: bool,
    pub reference: bool,
    pub normalize_adv: bool,
    pub adv_epsilon: f64,
    pub reward_mode: RewardMode,
    pub num_count: usize,
    pub max_value: i64,
    pub holes: usize,
    pub modulus: u32,
    pub hidden: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub checkpoint_every: usize,
    pub eval_prompts: usize,
    /// Sampled completions per eval prompt for the sampled-reward estimate.
    pub eval_samples: usize,
    /// Fail the step when the zero-sum identities are off by more than 1e-12.
    pub debug_checks: bool,
    pub seed: u64,
    pub out_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let task = TaskParams::defaults(TaskKind::Arith);
        let decode = DecodeConfig::default();
        let adv = AdvantageConfig::default();
        Self {
            task: TaskKind::Arith,
            lambda: DEFAULT_LAMBDA,
            group_size: 6,
            k_masks: 2,
            groups_per_batch: 4,
            steps: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            gen_len: decode.gen_len,
            block_size: decode.block_size,
            unmask_per_step: decode.unmask_per_step,
            temperature: None,
            eval_temperature: 0.0,
            centering: true,
            reference: true,
            normalize_adv: adv.normalize,
            adv_epsilon: adv.epsilon,
            reward_mode: RewardMode::Binary,
            num_count: task.num_count,
            max_value: task.max_value,
            holes: task.holes,
            modulus: task.modulus,
            hidden: crate::mdm::DEFAULT_HIDDEN,
            embed_dim: crate::mdm::DEFAULT_EMBED_DIM,
            window: crate::mdm::DEFAULT_WINDOW,
            checkpoint_every: 100,
            eval_prompts: 32,
            eval_samples: 4,
            debug_checks: false,
            seed: 0,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn field_names() -> Vec<String> {
        match serde_json::to_value(RunConfig::default()) {
            Ok(Value::Object(m)) => m.keys().cloned().collect(),
            _ => unreachable!("RunConfig serializes to an object"),
        }
    }

    pub fn rollout_temperature(&self) -> f64 {
        self.temperature.unwrap_or(match self.task {
            TaskKind::Sudoku4 => 0.3,
            _ => 0.9,
        })
    }

    pub fn decode_config(&self, temperature: f64) -> DecodeConfig {
        DecodeConfig {
            gen_len: self.gen_len,
            block_size: self.block_size,
            unmask_per_step: self.unmask_per_step,
            temperature,
            seed: self.seed,
        }
    }

    pub fn task_params(&self) -> TaskParams {
        TaskParams {
            kind: self.task,
            num_count: self.num_count,
            max_value: self.max_value,
            holes: self.holes,
            modulus: self.modulus,
        }
    }

    pub fn advantage_config(&self) -> AdvantageConfig {
        AdvantageConfig {
            normalize: self.normalize_adv,
            epsilon: self.adv_epsilon,
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec { mode: self.reward_mode }
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(msg.to_string());
            }
        };
        need(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda: must be finite and >= 0");
        need(self.group_size >= 2, "group_size: must be >= 2");
        need(self.k_masks >= 1, "k_masks: must be >= 1");
        need(self.groups_per_batch >= 1, "groups_per_batch: must be >= 1");
        need(self.lr > 0.0 && self.lr.is_finite(), "lr: must be positive");
        need((0.0..1.0).contains(&self.beta1), "beta1: must lie in [0, 1)");
        need((0.0..1.0).contains(&self.beta2), "beta2: must lie in [0, 1)");
        need(self.adam_eps > 0.0, "adam_eps: must be positive");
        need(self.weight_decay >= 0.0, "weight_decay: must be >= 0");
        need(self.adv_epsilon > 0.0, "adv_epsilon: must be positive");
        need(self.hidden >= 1 && self.embed_dim >= 1, "hidden/embed_dim: must be >= 1");
        need(self.eval_samples >= 1, "eval_samples: must be >= 1");
        need(
            self.temperature.is_none_or(|t| t >= 0.0 && t.is_finite()),
            "temperature: must be finite and >= 0",
        );
        if let Err(e) = self.decode_config(self.rollout_temperature()).validate() {
            errs.push(format!("decode: {e}"));
        }
        if let Err(e) = self.decode_config(self.eval_temperature).validate() {
            errs.push(format!("eval_temperature: {e}"));
        }
        if let Err(e) = self.task_params().generate(&mut crate::mdm::stream_rng(0, 0)) {
            errs.push(format!("task: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(errs))
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn suggestion(key: &str, known: &[String]) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::jaro_winkler(key, k), k))
        .filter(|(score, _)| *score > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.clone())
}

fn unknown_key_errors<'a>(keys: impl Iterator<Item = &'a String>, known: &[String]) -> Vec<String> {
    keys.filter(|k| !known.contains(k))
        .map(|k| match suggestion(k, known) {
            Some(s) => format!("unknown key {k:?} (did you mean {s:?}?)"),
            None => format!("unknown key {k:?}"),
        })
        .collect()
}

/// Parses a flat JSON object into a config, filling defaults and listing
/// every unknown key.
pub fn parse_config(text: &str) -> Result<RunConfig, HarnessError> {
    let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
    let Value::Object(map) = value else {
        return Err(HarnessError::Config(vec!["config must be a JSON object".into()]));
    };
    config_from_map(map)
}

pub fn config_from_map(map: Map<String, Value>) -> Result<RunConfig, HarnessError> {
    let known = RunConfig::field_names();
    let errs = unknown_key_errors(map.keys(), &known);
    if !errs.is_empty() {
        return Err(HarnessError::Config(errs));
    }
    let cfg: RunConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

/// Applies `RSPO_<KEY>` variables on top of `cfg`. Values are read as JSON
/// when they parse, otherwise as strings (so `RSPO_TASK=sudoku4` works).
pub fn apply_env_overrides<I>(cfg: &RunConfig, vars: I) -> Result<RunConfig, HarnessError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let Value::Object(mut map) = serde_json::to_value(cfg).expect("config serializes") else {
        unreachable!()
    };
    let mut overrides = Map::new();
    for (name, raw) in vars {
        let Some(key) = name.strip_prefix("RSPO_") else { continue };
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        overrides.insert(key.to_ascii_lowercase(), value);
    }
    let known = RunConfig::field_names();
    let errs: Vec<String> = unknown_key_errors(overrides.keys(), &known)
        .into_iter()
        .map(|e| format!("environment: {e}"))
        .collect();
    if !errs.is_empty() {
        return Err(HarnessError::Config(errs));
    }
    map.extend(overrides);
    config_from_map(map)
}
