use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MdmError, Sequence, TokenId};

/// Anything that predicts a categorical over clean tokens at a completion
/// position of a corrupted state.
pub trait Denoiser {
    /// Number of clean output tokens (vocabulary size minus the mask).
    fn num_outputs(&self) -> usize;

    fn mask_id(&self) -> TokenId;

    /// Log-probabilities over clean tokens at `position` given `state`.
    fn log_probs(&self, state: &Sequence, position: usize) -> Result<Vec<f64>, MdmError>;
}

/// Shape of the reference denoiser.
///
/// Context features for completion position `i`:
/// * a one-hot of `i` (`positions` slots),
/// * embeddings of the unmasked completion tokens at offsets `-window..=window`
///   (excluding `i` itself), one slot per offset,
/// * embeddings of the prompt tokens, one slot per distance from the prompt end,
/// * the fraction of masked completion positions.
///
/// These feed one `tanh` hidden layer and a softmax readout over clean tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Architecture {
    /// Vocabulary size including the mask token.
    pub vocab_size: usize,
    pub window: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Maximum completion length.
    pub positions: usize,
    /// Maximum prompt length.
    pub prompt_positions: usize,
}

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_EMBED_DIM: usize = 8;

impl Architecture {
    pub fn new(vocab_size: usize, positions: usize, prompt_positions: usize) -> Self {
        Self {
            vocab_size,
            window: DEFAULT_WINDOW,
            hidden: DEFAULT_HIDDEN,
            embed_dim: DEFAULT_EMBED_DIM,
            positions,
            prompt_positions,
        }
    }

    pub fn num_outputs(&self) -> usize {
        self.vocab_size - 1
    }

    pub fn mask_id(&self) -> TokenId {
        (self.vocab_size - 1) as TokenId
    }

    pub fn context_slots(&self) -> usize {
        2 * self.window + self.prompt_positions
    }

    pub fn layout(&self) -> Layout {
        let (v, e, h) = (self.num_outputs(), self.embed_dim, self.hidden);
        let embed = 0;
        let pos = embed + v * e;
        let ctx = pos + self.positions * h;
        let mask_w = ctx + self.context_slots() * e * h;
        let bias_hidden = mask_w + h;
        let out = bias_hidden + h;
        let bias_out = out + h * v;
        Layout {
            embed,
            pos,
            ctx,
            mask_w,
            bias_hidden,
            out,
            bias_out,
            total: bias_out + v,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }

    fn validate(&self) -> Result<(), MdmError> {
        if self.vocab_size < 2 {
            return Err(MdmError::DimensionMismatch(
                "vocabulary needs at least one clean token".into(),
            ));
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.positions == 0 {
            return Err(MdmError::DimensionMismatch(
                "hidden, embed_dim and positions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside the flat vector.
///
/// Row-major: `embed[token][k]`, `pos[position][j]`, `ctx[slot][k][j]`,
/// `mask_w[j]`, `bias_hidden[j]`, `out[j][c]`, `bias_out[c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub embed: usize,
    pub pos: usize,
    pub ctx: usize,
    pub mask_w: usize,
    pub bias_hidden: usize,
    pub out: usize,
    pub bias_out: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

struct Context {
    /// `(slot, token)` pairs of present context tokens.
    slots: Vec<(usize, usize)>,
    mask_frac: f64,
}

impl DenoiserParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            arch,
            theta: vec![0.0; arch.num_params()],
        }
    }

    /// Uniform init in `[-0.05, 0.05]`.
    pub fn init_uniform(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..arch.num_params())
            .map(|_| rng.gen_range(-0.05..=0.05))
            .collect();
        Self { arch, theta }
    }

    pub fn from_theta(arch: Architecture, theta: Vec<f64>) -> Result<Self, MdmError> {
        let p = Self { arch, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), MdmError> {
        self.arch.validate()?;
        if self.theta.len() != self.arch.num_params() {
            return Err(MdmError::DimensionMismatch(format!(
                "theta has {} entries, architecture needs {}",
                self.theta.len(),
                self.arch.num_params()
            )));
        }
        match self.theta.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(MdmError::NonFiniteParam(i)),
            None => Ok(()),
        }
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Hex SHA-256 of the little-endian parameter bytes.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for x in &self.theta {
            hasher.update(x.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn check_state(&self, state: &Sequence, position: usize) -> Result<(), MdmError> {
        let a = &self.arch;
        if state.completion.len() > a.positions {
            return Err(MdmError::DimensionMismatch(format!(
                "completion length {} exceeds {} positions",
                state.completion.len(),
                a.positions
            )));
        }
        if state.prompt.len() > a.prompt_positions {
            return Err(MdmError::DimensionMismatch(format!(
                "prompt length {} exceeds {} prompt positions",
                state.prompt.len(),
                a.prompt_positions
            )));
        }
        if position >= state.completion.len() {
            return Err(MdmError::PositionOutOfRange {
                position,
                len: state.completion.len(),
            });
        }
        let mask = a.mask_id();
        if let Some(&t) = state.prompt.iter().find(|&&t| t >= mask) {
            return Err(MdmError::InvalidToken(t));
        }
        if let Some(&t) = state.completion.iter().find(|&&t| t > mask) {
            return Err(MdmError::InvalidToken(t));
        }
        Ok(())
    }

    fn context(&self, state: &Sequence, position: usize) -> Context {
        let a = &self.arch;
        let mask = a.mask_id();
        let len = state.completion.len();
        let mut slots = Vec::with_capacity(a.context_slots());
        for d in 1..=a.window {
            if position >= d {
                let t = state.completion[position - d];
                if t != mask {
                    slots.push((d - 1, t as usize));
                }
            }
            if position + d < len {
                let t = state.completion[position + d];
                if t != mask {
                    slots.push((a.window + d - 1, t as usize));
                }
            }
        }
        for (j, &t) in state.prompt.iter().rev().enumerate() {
            slots.push((2 * a.window + j, t as usize));
        }
        let masked = state.completion.iter().filter(|&&t| t == mask).count();
        Context {
            slots,
            mask_frac: masked as f64 / len as f64,
        }
    }

    fn pre_activation(&self, ctx: &Context, position: usize) -> Vec<f64> {
        let (a, l, th) = (&self.arch, self.arch.layout(), &self.theta);
        let (h, e) = (a.hidden, a.embed_dim);
        let mut pre: Vec<f64> = (0..h)
            .map(|j| {
                th[l.bias_hidden + j] + th[l.pos + position * h + j] + th[l.mask_w + j] * ctx.mask_frac
            })
            .collect();
        for &(slot, tok) in &ctx.slots {
            let emb = &th[l.embed + tok * e..l.embed + (tok + 1) * e];
            let block = l.ctx + slot * e * h;
            for (k, &ek) in emb.iter().enumerate() {
                let row = &th[block + k * h..block + (k + 1) * h];
                for (p, w) in pre.iter_mut().zip(row) {
                    *p += ek * w;
                }
            }
        }
        pre
    }

    fn readout(&self, hidden: &[f64]) -> Vec<f64> {
        let (l, th) = (self.arch.layout(), &self.theta);
        let v = self.arch.num_outputs();
        let mut logits = th[l.bias_out..l.bias_out + v].to_vec();
        for (j, &hj) in hidden.iter().enumerate() {
            let row = &th[l.out + j * v..l.out + (j + 1) * v];
            for (z, w) in logits.iter_mut().zip(row) {
                *z += hj * w;
            }
        }
        logits
    }

    /// Log-probabilities at every completion position, masked or not.
    pub fn log_prob_table(&self, state: &Sequence) -> Result<Vec<Vec<f64>>, MdmError> {
        (0..state.completion.len())
            .map(|i| self.log_probs(state, i))
            .collect()
    }

    /// Gradient of `log p(token | state)` at a masked `position`.
    pub fn logprob_grad(
        &self,
        state: &Sequence,
        position: usize,
        token: TokenId,
    ) -> Result<Vec<f64>, MdmError> {
        let mut grad = vec![0.0; self.num_params()];
        self.accumulate_logprob_grad(state, position, token, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Adds `scale * grad log p(token | state)` into `grad` and returns the
    /// log-probability.
    pub fn accumulate_logprob_grad(
        &self,
        state: &Sequence,
        position: usize,
        token: TokenId,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, MdmError> {
        self.check_state(state, position)?;
        if !state.is_masked(position, self.arch.mask_id()) {
            return Err(MdmError::PositionNotMasked(position));
        }
        let v = self.arch.num_outputs();
        if token as usize >= v {
            return Err(MdmError::InvalidToken(token));
        }
        if grad.len() != self.num_params() {
            return Err(MdmError::DimensionMismatch(format!(
                "gradient buffer has {} entries, expected {}",
                grad.len(),
                self.num_params()
            )));
        }
        let (a, l, th) = (&self.arch, self.arch.layout(), &self.theta);
        let (h, e) = (a.hidden, a.embed_dim);

        let ctx = self.context(state, position);
        let hidden: Vec<f64> = self
            .pre_activation(&ctx, position)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let lp = log_softmax(&self.readout(&hidden));

        // d log p_token / d logits = onehot(token) - p
        let dlogits: Vec<f64> = lp
            .iter()
            .enumerate()
            .map(|(c, &l)| f64::from(u8::from(c == token as usize)) - l.exp())
            .collect();

        let mut dpre = vec![0.0; h];
        for j in 0..h {
            let row = &th[l.out + j * v..l.out + (j + 1) * v];
            let dh: f64 = row.iter().zip(&dlogits).map(|(w, d)| w * d).sum();
            dpre[j] = dh * (1.0 - hidden[j] * hidden[j]);
            let grow = &mut grad[l.out + j * v..l.out + (j + 1) * v];
            for (g, d) in grow.iter_mut().zip(&dlogits) {
                *g += scale * hidden[j] * d;
            }
        }
        for (g, d) in grad[l.bias_out..l.bias_out + v].iter_mut().zip(&dlogits) {
            *g += scale * d;
        }
        for j in 0..h {
            grad[l.bias_hidden + j] += scale * dpre[j];
            grad[l.pos + position * h + j] += scale * dpre[j];
            grad[l.mask_w + j] += scale * dpre[j] * ctx.mask_frac;
        }
        for &(slot, tok) in &ctx.slots {
            let block = l.ctx + slot * e * h;
            for k in 0..e {
                let ek = th[l.embed + tok * e + k];
                let wrow = block + k * h;
                let mut demb = 0.0;
                for j in 0..h {
                    grad[wrow + j] += scale * ek * dpre[j];
                    demb += th[wrow + j] * dpre[j];
                }
                grad[l.embed + tok * e + k] += scale * demb;
            }
        }
        Ok(lp[token as usize])
    }
}

impl Denoiser for DenoiserParams {
    fn num_outputs(&self) -> usize {
        self.arch.num_outputs()
    }

    fn mask_id(&self) -> TokenId {
        self.arch.mask_id()
    }

    fn log_probs(&self, state: &Sequence, position: usize) -> Result<Vec<f64>, MdmError> {
        self.check_state(state, position)?;
        let ctx = self.context(state, position);
        let hidden: Vec<f64> = self
            .pre_activation(&ctx, position)
            .into_iter()
            .map(f64::tanh)
            .collect();
        Ok(log_softmax(&self.readout(&hidden)))
    }
}

/// Oracle denoiser that puts all mass on a known clean completion.
#[derive(Debug, Clone)]
pub struct PerfectDenoiser {
    pub target: Vec<TokenId>,
    pub num_outputs: usize,
}

impl Denoiser for PerfectDenoiser {
    fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    fn mask_id(&self) -> TokenId {
        self.num_outputs as TokenId
    }

    fn log_probs(&self, state: &Sequence, position: usize) -> Result<Vec<f64>, MdmError> {
        if state.completion.len() != self.target.len() {
            return Err(MdmError::DimensionMismatch(
                "state length differs from target".into(),
            ));
        }
        let want = *self.target.get(position).ok_or(MdmError::PositionOutOfRange {
            position,
            len: self.target.len(),
        })? as usize;
        Ok((0..self.num_outputs)
            .map(|c| if c == want { 0.0 } else { f64::NEG_INFINITY })
            .collect())
    }
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
