use std::fs::File;
use std::io::BufReader;

use proptest::prelude::*;

use rspo_core::harness::{read_checkpoint, run_experiment, RunConfig};
use rspo_core::rspo::{batch_advantages, rspo_loss, AdvantageConfig};
use rspo_core::score::center_scores;
use rspo_core::tasks::{
    generate_instances, read_instances, reward, write_instances, RewardMode, RewardSpec, TaskKind, TaskParams,
};

proptest! {
    #[test]
    fn rspo_weights_sum_to_zero(
        rewards in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..5),
        deltas_seed in prop::collection::vec(-10.0f64..10.0, 20),
        lambda in 1e-3f64..5.0,
    ) {
        let n = rewards.len() * 4;
        let adv = batch_advantages(&rewards, &AdvantageConfig::default()).unwrap().advantages;
        let batch = center_scores(&deltas_seed[..n]).unwrap();
        let out = rspo_loss(&batch, &adv, lambda).unwrap();
        prop_assert!(out.weights.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(out.loss.is_finite());
    }
}

#[test]
fn instances_round_trip_and_keep_rewards() {
    let spec = RewardSpec {
        mode: RewardMode::Binary,
    };
    for kind in [TaskKind::Countdown, TaskKind::Sudoku4, TaskKind::Arith] {
        let instances = generate_instances(&TaskParams::defaults(kind), 25, 9).unwrap();
        let mut buf = Vec::new();
        write_instances(&mut buf, &instances).unwrap();
        let back = read_instances(buf.as_slice()).unwrap();
        assert_eq!(back, instances);
        for inst in &back {
            assert_eq!(reward(inst, "", spec), 0.0);
        }
    }
}

#[test]
fn run_directory_holds_final_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        steps: 6,
        checkpoint_every: 3,
        gen_len: 8,
        hidden: 8,
        eval_prompts: 4,
        out_dir: Some(dir.path().to_string_lossy().into_owned()),
        ..RunConfig::default()
    };
    let out = run_experiment(&cfg).unwrap();
    for name in ["config.json", "metrics.jsonl", "timing.jsonl", "summary.json", "ckpt_000003.bin", "ckpt_final.bin"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let ckpt = read_checkpoint(&mut BufReader::new(File::open(dir.path().join("ckpt_final.bin")).unwrap())).unwrap();
    assert_eq!(ckpt.step, 6);
    assert_eq!(ckpt.config_hash, cfg.hash());
    assert_eq!(ckpt.current, out.checkpoint.current);
    assert_eq!(ckpt.reference.fingerprint(), out.summary.reference_fingerprint_initial);
    assert_ne!(ckpt.current, ckpt.reference);
}
