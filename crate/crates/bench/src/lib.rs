//! Shared fixtures for the benchmarks.

use rspo_core::harness::RunConfig;
use rspo_core::mdm::{Architecture, DenoiserParams, TokenId};
use rspo_core::tasks::{encode_text, task_vocab};

/// Default-sized arith model with a fixed prompt and completion.
pub struct Fixture {
    pub cfg: RunConfig,
    pub params: DenoiserParams,
    pub prompt: Vec<TokenId>,
    pub completion: Vec<TokenId>,
}

pub fn arith_fixture() -> Fixture {
    let cfg = RunConfig::default();
    let vocab = task_vocab();
    let arch = Architecture {
        vocab_size: vocab.size(),
        window: cfg.window,
        hidden: cfg.hidden,
        embed_dim: cfg.embed_dim,
        positions: cfg.gen_len,
        prompt_positions: cfg.task_params().max_prompt_len(),
    };
    let params = DenoiserParams::init_uniform(arch, 1);
    let prompt = encode_text("3+4=?", &vocab).expect("prompt in alphabet");
    let text = format!("{:<width$}", "7", width = cfg.gen_len);
    let completion = encode_text(&text, &vocab).expect("completion in alphabet");
    Fixture {
        cfg,
        params,
        prompt,
        completion,
    }
}
