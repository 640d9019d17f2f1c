use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Payload, TaskError, TaskInstance, TaskKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArithPayload {
    pub a: u32,
    pub b: u32,
    pub modulus: u32,
}

/// `"a+b=?"` with `a, b < modulus`.
pub fn gen_arith<R: Rng + ?Sized>(rng: &mut R, modulus: u32) -> Result<TaskInstance, TaskError> {
    if !(1..=100).contains(&modulus) {
        return Err(TaskError::InvalidSetting(format!("modulus {modulus} not in 1..=100")));
    }
    let a = rng.gen_range(0..modulus);
    let b = rng.gen_range(0..modulus);
    Ok(TaskInstance {
        kind: TaskKind::Arith,
        prompt: format!("{a}+{b}=?"),
        payload: Payload::Arith(ArithPayload { a, b, modulus }),
        split: Default::default(),
    })
}

fn first_integer(text: &str) -> Option<u64> {
    let start = text.find(|c: char| c.is_ascii_digit())?;
    let digits: String = text[start..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

/// 1 iff the first run of digits in the completion equals `(a + b) mod modulus`.
pub fn reward_arith(p: &ArithPayload, completion: &str) -> f64 {
    let want = (u64::from(p.a) + u64::from(p.b)) % u64::from(p.modulus);
    f64::from(u8::from(first_integer(completion) == Some(want)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdm::stream_rng;

    #[test]
    fn first_integer_rule() {
        let p = ArithPayload { a: 3, b: 4, modulus: 10 };
        assert_eq!(reward_arith(&p, "7"), 1.0);
        assert_eq!(reward_arith(&p, "8"), 0.0);
        assert_eq!(reward_arith(&p, "=? 7.."), 1.0);
        assert_eq!(reward_arith(&p, "77"), 0.0);
        assert_eq!(reward_arith(&p, "8 7"), 0.0);
        assert_eq!(reward_arith(&p, ""), 0.0);
        assert_eq!(reward_arith(&p, "99999999999999999999999"), 0.0);
        let wrap = ArithPayload { a: 8, b: 5, modulus: 10 };
        assert_eq!(reward_arith(&wrap, "3"), 1.0);
    }

    #[test]
    fn generator_bounds() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let inst = gen_arith(&mut rng, 10).unwrap();
            let Payload::Arith(p) = &inst.payload else { unreachable!() };
            assert!(p.a < 10 && p.b < 10);
            assert_eq!(inst.prompt, format!("{}+{}=?", p.a, p.b));
        }
        assert!(gen_arith(&mut rng, 101).is_err());
        assert!(gen_arith(&mut rng, 0).is_err());
    }
}
