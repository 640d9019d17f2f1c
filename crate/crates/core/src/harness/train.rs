use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::{Adam, HarnessError, RunConfig, StepMetrics, TrainCheckpoint};
use crate::mdm::{decode_semi_ar, sample_completion_group, stream_rng, Architecture, DenoiserParams, TokenId, Vocab};
use crate::rspo::{batch_advantages, rspo_gradient, rspo_loss};
use crate::score::{
    batch_mean_offset, center_scores, draw_masks, relative_score, uncentered_scores, var_delta, ScoredCompletion,
};
use crate::tasks::{
    decode_tokens, encode_text, generate_instances, reward, task_vocab, Payload, Split, TaskInstance,
};

// Sub-stream tags derived from the run seed.
const INIT: u64 = 0;
const TRAIN_PROMPTS: u64 = 1;
const ROLLOUTS: u64 = 2;
const MASKS: u64 = 3;
const EVAL_PROMPTS: u64 = 4;
const EVAL_SAMPLING: u64 = 5;

fn sub_seed(seed: u64, tag: u64) -> u64 {
    stream_rng(seed, tag).gen()
}

fn sudoku_solution(inst: &TaskInstance) -> Option<Vec<u8>> {
    match &inst.payload {
        Payload::Sudoku4(p) => Some(p.solution.clone()),
        _ => None,
    }
}

/// Training state: current and frozen reference parameters, optimizer,
/// and the fixed evaluation prompts.
pub struct Trainer {
    pub cfg: RunConfig,
    pub vocab: Vocab,
    pub params: DenoiserParams,
    pub reference: DenoiserParams,
    pub optimizer: Adam,
    /// Optimizer updates taken so far.
    pub step: usize,
    eval_set: Vec<TaskInstance>,
    held_out_solutions: BTreeSet<Vec<u8>>,
    init_seed: u64,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let vocab = task_vocab();
        let arch = Architecture {
            vocab_size: vocab.size(),
            window: cfg.window,
            hidden: cfg.hidden,
            embed_dim: cfg.embed_dim,
            positions: cfg.gen_len,
            prompt_positions: cfg.task_params().max_prompt_len(),
        };
        let init_seed = sub_seed(cfg.seed, INIT);
        let params = DenoiserParams::init_uniform(arch, init_seed);
        let mut eval_set = generate_instances(&cfg.task_params(), cfg.eval_prompts, sub_seed(cfg.seed, EVAL_PROMPTS))?;
        eval_set.iter_mut().for_each(|i| i.split = Split::Test);
        let held_out_solutions = eval_set.iter().filter_map(sudoku_solution).collect();
        let optimizer = Adam::new(
            params.num_params(),
            cfg.lr,
            (cfg.beta1, cfg.beta2),
            cfg.adam_eps,
            cfg.weight_decay,
        );
        Ok(Self {
            reference: params.clone(),
            params,
            vocab,
            optimizer,
            step: 0,
            eval_set,
            held_out_solutions,
            init_seed,
            cfg,
        })
    }

    pub fn eval_set(&self) -> &[TaskInstance] {
        &self.eval_set
    }

    /// Training prompt `index`. Sudoku puzzles whose solution grid belongs
    /// to the eval set are redrawn.
    fn train_instance(&self, index: u64) -> Result<TaskInstance, HarnessError> {
        let base = sub_seed(self.cfg.seed, TRAIN_PROMPTS);
        let params = self.cfg.task_params();
        for attempt in 0u64.. {
            let inst = params.generate(&mut stream_rng(base.wrapping_add(attempt), index))?;
            match sudoku_solution(&inst) {
                Some(sol) if self.held_out_solutions.contains(&sol) => continue,
                _ => return Ok(inst),
            }
        }
        unreachable!()
    }

    /// One optimizer update on `groups_per_batch` fresh prompt groups.
    pub fn train_step(&mut self) -> Result<StepMetrics, HarnessError> {
        let start = Instant::now();
        let cfg = &self.cfg;
        let (g, groups) = (cfg.group_size, cfg.groups_per_batch);
        let n = g * groups;
        let decode = cfg.decode_config(cfg.rollout_temperature());
        let rollout_seed = sub_seed(cfg.seed, ROLLOUTS);
        let mask_seed = sub_seed(cfg.seed, MASKS);

        let mut prompts: Vec<Vec<TokenId>> = Vec::with_capacity(groups);
        let mut completions: Vec<Vec<TokenId>> = Vec::with_capacity(n);
        let mut group_rewards: Vec<Vec<f64>> = Vec::with_capacity(groups);
        for gi in 0..groups {
            let index = (self.step * groups + gi) as u64;
            let inst = self.train_instance(index)?;
            let prompt = encode_text(&inst.prompt, &self.vocab)?;
            let decoded =
                sample_completion_group(&self.params, &prompt, g, &decode, &mut stream_rng(rollout_seed, index))?;
            let mut rewards = Vec::with_capacity(g);
            for d in decoded {
                let text = decode_tokens(&d.sequence.completion, &self.vocab);
                rewards.push(reward(&inst, &text, cfg.reward_spec()));
                completions.push(d.sequence.completion);
            }
            prompts.push(prompt);
            group_rewards.push(rewards);
        }

        let reference = cfg.reference.then_some(&self.reference);
        let scored: Vec<ScoredCompletion> = (0..n)
            .into_par_iter()
            .map(|i| {
                let stream = (self.step * n + i) as u64;
                let masks = draw_masks(completions[i].len(), cfg.k_masks, &mut stream_rng(mask_seed, stream))?;
                relative_score(&self.params, reference, &prompts[i / g], &completions[i], &masks)
            })
            .collect::<Result<_, _>>()?;

        let deltas: Vec<f64> = scored.iter().map(|s| s.delta).collect();
        let batch = if cfg.centering {
            center_scores(&deltas)?
        } else {
            uncentered_scores(&deltas)?
        }
        .with_lengths(completions.iter().map(Vec::len).collect());
        let adv = batch_advantages(&group_rewards, &cfg.advantage_config())?;
        let loss = rspo_loss(&batch, &adv.advantages, cfg.lambda)?;
        let grads: Vec<Vec<f64>> = scored.into_iter().map(|s| s.grad).collect();
        let gradient = rspo_gradient(&batch, &adv.advantages, cfg.lambda, &grads)?;

        let step = self.step;
        if !loss.loss.is_finite() {
            return Err(HarnessError::NonFinite {
                step,
                what: "loss".into(),
            });
        }
        if gradient.iter().any(|x| !x.is_finite()) {
            return Err(HarnessError::NonFinite {
                step,
                what: "gradient".into(),
            });
        }
        let sum_centered: f64 = batch.centered.iter().sum();
        let sum_weights: f64 = loss.weights.iter().sum();
        let zero_sum_expected = cfg.centering || cfg.lambda == 0.0;
        if cfg.debug_checks && zero_sum_expected && (sum_weights.abs() > 1e-12 || (cfg.centering && sum_centered.abs() > 1e-12)) {
            return Err(HarnessError::ZeroSum {
                step,
                sum_centered,
                sum_weights,
            });
        }
        let grad_norm = gradient.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.optimizer.step(&mut self.params.theta, &gradient)?;
        self.step += 1;

        Ok(StepMetrics {
            step,
            mean_reward: group_rewards.iter().flatten().sum::<f64>() / n as f64,
            loss: loss.loss,
            grad_norm,
            var_delta: var_delta(&batch),
            batch_mean_offset: batch_mean_offset(&batch),
            zero_std_group_ratio: adv.zero_std_ratio(groups),
            sum_centered,
            sum_weights,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }

    /// Mean reward on the eval prompts. At temperature 0 each prompt is
    /// decoded once; otherwise `samples` times on fixed streams, so repeated
    /// calls with the same parameters agree.
    pub fn evaluate(&self, temperature: f64, samples: usize) -> Result<f64, HarnessError> {
        let decode = self.cfg.decode_config(temperature);
        let samples = if temperature == 0.0 { 1 } else { samples.max(1) };
        let seed = sub_seed(self.cfg.seed, EVAL_SAMPLING);
        let spec = self.cfg.reward_spec();
        let total: Vec<f64> = self
            .eval_set
            .par_iter()
            .enumerate()
            .map(|(i, inst)| -> Result<f64, HarnessError> {
                let prompt = encode_text(&inst.prompt, &self.vocab)?;
                let mut sum = 0.0;
                for j in 0..samples {
                    let d = decode_semi_ar(
                        &self.params,
                        &prompt,
                        &decode,
                        &mut stream_rng(seed, (i * samples + j) as u64),
                    )?;
                    sum += reward(inst, &decode_tokens(&d.sequence.completion, &self.vocab), spec);
                }
                Ok(sum)
            })
            .collect::<Result<_, _>>()?;
        let count = (self.eval_set.len() * samples).max(1) as f64;
        Ok(total.iter().sum::<f64>() / count)
    }

    pub fn checkpoint(&self) -> TrainCheckpoint {
        TrainCheckpoint {
            step: self.step as u64,
            config_hash: self.cfg.hash(),
            seed: self.init_seed,
            current: self.params.clone(),
            reference: self.reference.clone(),
            optimizer: self.optimizer.state.clone(),
        }
    }
}
