//! Checkpoint format demonstration: write a trained run checkpoint to disk,
//! restore it into a fresh trainer, and verify the parameters bit-for-bit.
//!
//! Run with: cargo run --example checkpoint_roundtrip

use droq_lab::agent::{Trainer, TrainerConfig};
use droq_lab::q_ensemble::WhichNets;

fn main() {
    let mut cfg = TrainerConfig::minimal("pendulum", "DroQ");
    cfg.hidden_width = 16;
    cfg.batch_size = 16;
    cfg.g = 2;
    cfg.random_starting_steps = 50;
    cfg.seed = 42;
    let resolved = cfg.resolve().expect("config");

    let mut trainer = Trainer::new(resolved.clone()).expect("trainer");
    trainer.run_steps(120, false).expect("short training run");

    let path = std::env::temp_dir().join("droq_lab_example_checkpoint.bin");
    let mut file = std::fs::File::create(&path).expect("create");
    trainer.save_checkpoint(&mut file).expect("save");
    drop(file);
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path).unwrap().len());

    let mut restored = Trainer::new(resolved).expect("trainer");
    let mut file = std::fs::File::open(&path).expect("open");
    restored.restore_checkpoint(&mut file).expect("restore");

    for i in 0..trainer.ensemble().size() {
        for which in [WhichNets::Online, WhichNets::Target] {
            for (a, b) in trainer
                .ensemble()
                .member(which, i)
                .params()
                .zip(restored.ensemble().member(which, i).params())
            {
                for (x, y) in a.values().iter().zip(b.values()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
    println!("restored parameters are bit-identical");
    let _ = std::fs::remove_file(&path);
}
