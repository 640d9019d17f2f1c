//! Verifiable toy tasks: mini-Countdown, 4x4 Sudoku and modular addition.
//!
//! Prompts and completions are plain character strings over a shared
//! character vocabulary ([`task_vocab`]). Reward functions are total: any
//! string gets a reward in `[0, 1]`, malformed text scores 0.

mod arith;
mod countdown;
mod sudoku;

pub use arith::{gen_arith, reward_arith, ArithPayload};
pub use countdown::{
    evaluate_expression, gen_countdown, reward_countdown, solve_countdown, CountdownPayload,
};
pub use sudoku::{
    count_solutions, gen_sudoku4, is_valid_solution, reward_sudoku4, split_by_solution, Grid,
    SplitPartition, SudokuPayload,
};

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdm::{stream_rng, TokenId, Vocab};

/// Bumped whenever a generator's draw sequence changes.
pub const GENERATOR_VERSION: u32 = 1;

/// Clean characters of the task vocabulary; the mask token is appended.
pub const TASK_ALPHABET: &str = "0123456789+-*/()=?,;. ";

/// Rendering of the mask token in decoded text.
pub const MASK_CHAR: char = '_';

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("character {0:?} is not in the vocabulary")]
    UnknownChar(char),
    #[error("invalid generator setting: {0}")]
    InvalidSetting(String),
    #[error("instance payload does not match kind {0:?}")]
    PayloadMismatch(TaskKind),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn task_vocab() -> Vocab {
    let chars: Vec<char> = TASK_ALPHABET.chars().collect();
    Vocab::new(&chars).expect("task alphabet has distinct characters")
}

pub fn encode_text(text: &str, vocab: &Vocab) -> Result<Vec<TokenId>, TaskError> {
    text.chars()
        .map(|c| vocab.id_of(c).ok_or(TaskError::UnknownChar(c)))
        .collect()
}

/// Mask tokens render as [`MASK_CHAR`].
pub fn decode_tokens(tokens: &[TokenId], vocab: &Vocab) -> String {
    tokens
        .iter()
        .map(|&t| vocab.char_of(t).unwrap_or(MASK_CHAR))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Countdown,
    Sudoku4,
    Arith,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Countdown => "countdown",
            TaskKind::Sudoku4 => "sudoku4",
            TaskKind::Arith => "arith",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "countdown" => Some(TaskKind::Countdown),
            "sudoku4" => Some(TaskKind::Sudoku4),
            "arith" => Some(TaskKind::Arith),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Countdown(CountdownPayload),
    Sudoku4(SudokuPayload),
    Arith(ArithPayload),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub prompt: String,
    pub payload: Payload,
    #[serde(default)]
    pub split: Split,
}

impl TaskInstance {
    fn check(&self) -> Result<(), TaskError> {
        let ok = matches!(
            (self.kind, &self.payload),
            (TaskKind::Countdown, Payload::Countdown(_))
                | (TaskKind::Sudoku4, Payload::Sudoku4(_))
                | (TaskKind::Arith, Payload::Arith(_))
        );
        if ok {
            Ok(())
        } else {
            Err(TaskError::PayloadMismatch(self.kind))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    #[default]
    Binary,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RewardSpec {
    pub mode: RewardMode,
}

/// Reward of `completion` for `instance`, always in `[0, 1]`.
pub fn reward(instance: &TaskInstance, completion: &str, spec: RewardSpec) -> f64 {
    match &instance.payload {
        Payload::Countdown(p) => reward_countdown(p, completion, spec),
        Payload::Sudoku4(p) => reward_sudoku4(p, completion, spec),
        Payload::Arith(p) => reward_arith(p, completion),
    }
}

/// Generator settings for one task family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub kind: TaskKind,
    /// Countdown: how many numbers (3 or 4).
    pub num_count: usize,
    /// Countdown: numbers drawn from `1..=max_value`.
    pub max_value: i64,
    /// Sudoku: cells removed.
    pub holes: usize,
    /// Arith: modulus.
    pub modulus: u32,
}

impl TaskParams {
    pub fn defaults(kind: TaskKind) -> Self {
        Self {
            kind,
            num_count: 3,
            max_value: 9,
            holes: 6,
            modulus: 10,
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TaskInstance, TaskError> {
        match self.kind {
            TaskKind::Countdown => gen_countdown(rng, self.num_count, 1..=self.max_value),
            TaskKind::Sudoku4 => gen_sudoku4(rng, self.holes),
            TaskKind::Arith => gen_arith(rng, self.modulus),
        }
    }

    /// Longest prompt this generator can emit, in characters.
    pub fn max_prompt_len(&self) -> usize {
        let digits = |x: u64| x.max(1).to_string().len();
        match self.kind {
            TaskKind::Countdown => {
                let n = self.num_count;
                let m = self.max_value.max(1) as u64;
                let target = (m.saturating_pow(n as u32)).max(m * n as u64);
                n * digits(m) + (n - 1) + 1 + digits(target)
            }
            TaskKind::Sudoku4 => 16,
            TaskKind::Arith => {
                let m = u64::from(self.modulus.max(1)) - 1;
                2 * digits(m) + 3
            }
        }
    }
}

/// `count` instances; instance `i` is drawn from stream `i` of `seed`, so
/// the output is a pure function of `(seed, GENERATOR_VERSION)`.
pub fn generate_instances(params: &TaskParams, count: usize, seed: u64) -> Result<Vec<TaskInstance>, TaskError> {
    (0..count as u64)
        .map(|i| params.generate(&mut stream_rng(seed, i)))
        .collect()
}

/// One JSON object per line.
pub fn write_instances<W: Write>(w: &mut W, instances: &[TaskInstance]) -> Result<(), TaskError> {
    for inst in instances {
        serde_json::to_writer(&mut *w, inst).map_err(|e| TaskError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(r: R) -> Result<Vec<TaskInstance>, TaskError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TaskInstance =
            serde_json::from_str(&line).map_err(|source| TaskError::Parse { line: i + 1, source })?;
        inst.check()?;
        out.push(inst);
    }
    Ok(out)
}
