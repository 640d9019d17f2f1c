use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Payload, RewardMode, RewardSpec, TaskError, TaskInstance, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountdownPayload {
    pub numbers: Vec<i64>,
    pub target: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    fn apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            Op::Add => a.checked_add(b),
            Op::Sub => a.checked_sub(b),
            Op::Mul => a.checked_mul(b),
            Op::Div => (b != 0 && a.checked_rem(b)? == 0).then(|| a / b),
        }
    }

    fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }
}

/// Samples `num_count` numbers and a positive target reached by a random
/// expression that uses every number once.
pub fn gen_countdown<R: Rng + ?Sized>(
    rng: &mut R,
    num_count: usize,
    values: RangeInclusive<i64>,
) -> Result<TaskInstance, TaskError> {
    if !(3..=4).contains(&num_count) {
        return Err(TaskError::InvalidSetting(format!("num_count {num_count} not in 3..=4")));
    }
    if *values.start() < 1 || values.is_empty() || *values.end() > 99 {
        return Err(TaskError::InvalidSetting("values must lie in 1..=99".into()));
    }
    let numbers: Vec<i64> = (0..num_count).map(|_| rng.gen_range(values.clone())).collect();
    let target = loop {
        let mut pool = numbers.clone();
        let mut ok = true;
        while pool.len() > 1 {
            let i = rng.gen_range(0..pool.len());
            let a = pool.swap_remove(i);
            let j = rng.gen_range(0..pool.len());
            let b = pool.swap_remove(j);
            let op = Op::ALL[rng.gen_range(0..4)];
            match op.apply(a, b) {
                Some(v) => pool.push(v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && pool[0] > 0 {
            break pool[0];
        }
    };
    let listed: Vec<String> = numbers.iter().map(i64::to_string).collect();
    Ok(TaskInstance {
        kind: TaskKind::Countdown,
        prompt: format!("{}={}", listed.join(","), target),
        payload: Payload::Countdown(CountdownPayload { numbers, target }),
        split: Default::default(),
    })
}

struct Parser<'a> {
    chars: &'a [char],
    pos: usize,
    literals: Vec<i64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Option<i64> {
        let mut acc = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { Op::Add } else { Op::Sub }.apply(acc, rhs)?;
        }
        Some(acc)
    }

    fn term(&mut self) -> Option<i64> {
        let mut acc = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = if c == '*' { Op::Mul } else { Op::Div }.apply(acc, rhs)?;
        }
        Some(acc)
    }

    fn factor(&mut self) -> Option<i64> {
        match self.peek()? {
            '(' => {
                self.pos += 1;
                let v = self.expr()?;
                (self.peek()? == ')').then(|| self.pos += 1)?;
                Some(v)
            }
            c if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let s: String = self.chars[start..self.pos].iter().collect();
                let v = s.parse::<i64>().ok()?;
                self.literals.push(v);
                Some(v)
            }
            _ => None,
        }
    }
}

/// Evaluates an integer expression over `+ - * /` and parentheses with
/// exact division. Returns the value and the literals used, or `None` when
/// the text is not a complete well-formed expression.
pub fn evaluate_expression(text: &str) -> Option<(i64, Vec<i64>)> {
    let chars: Vec<char> = text.chars().collect();
    let mut p = Parser {
        chars: &chars,
        pos: 0,
        literals: Vec::new(),
    };
    let v = p.expr()?;
    (p.pos == chars.len()).then_some((v, p.literals))
}

/// The expression part of a completion: leading spaces skipped, cut at the
/// first character outside the expression alphabet.
fn expression_prefix(completion: &str) -> &str {
    let s = completion.trim_start_matches(' ');
    let end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || "+-*/()".contains(*c)))
        .map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn uses_allowed_numbers(literals: &[i64], numbers: &[i64]) -> bool {
    let mut avail = numbers.to_vec();
    literals.iter().all(|l| match avail.iter().position(|a| a == l) {
        Some(i) => {
            avail.swap_remove(i);
            true
        }
        None => false,
    })
}

/// Binary: 1 iff the expression uses each given number at most as often as
/// it appears and evaluates to the target. Partial mode additionally gives
/// `0.5 * max(0, 1 - |value - target| / |target|)` to valid expressions that
/// miss the target.
pub fn reward_countdown(p: &CountdownPayload, completion: &str, spec: RewardSpec) -> f64 {
    let Some((value, literals)) = evaluate_expression(expression_prefix(completion)) else {
        return 0.0;
    };
    if !uses_allowed_numbers(&literals, &p.numbers) {
        return 0.0;
    }
    if value == p.target {
        return 1.0;
    }
    match spec.mode {
        RewardMode::Binary => 0.0,
        RewardMode::Partial => {
            let rel = (value - p.target).abs() as f64 / p.target.abs().max(1) as f64;
            0.5 * (1.0 - rel).max(0.0)
        }
    }
}

/// Exhaustive search over every way of combining a sub-multiset of
/// `numbers` with `+ - * /` (exact division). Returns a fully parenthesized
/// expression reaching `target`.
pub fn solve_countdown(numbers: &[i64], target: i64) -> Option<String> {
    fn search(items: &mut Vec<(i64, String)>, target: i64) -> Option<String> {
        if let Some((_, e)) = items.iter().find(|(v, _)| *v == target) {
            return Some(e.clone());
        }
        let n = items.len();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for op in Op::ALL {
                    // commutative ops only need one order
                    if matches!(op, Op::Add | Op::Mul) && j < i {
                        continue;
                    }
                    let (a, ea) = items[i].clone();
                    let (b, eb) = items[j].clone();
                    let Some(v) = op.apply(a, b) else { continue };
                    let mut next: Vec<(i64, String)> = items
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != i && k != j)
                        .map(|(_, x)| x.clone())
                        .collect();
                    next.push((v, format!("({ea}{}{eb})", op.symbol())));
                    if let Some(found) = search(&mut next, target) {
                        return Some(found);
                    }
                }
            }
        }
        None
    }
    let mut items: Vec<(i64, String)> = numbers.iter().map(|&n| (n, n.to_string())).collect();
    search(&mut items, target)
}
