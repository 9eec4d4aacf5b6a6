//! Trains DroQ on the pendulum swing-up task at desk scale and prints the
//! per-epoch metrics. Writes metrics.csv / curves.svg under out/pendulum.
//!
//! Run with: cargo run --release --example train_pendulum

use droq_lab::agent::TrainerConfig;
use droq_lab::experiment::run_experiment;

fn main() {
    let mut cfg = TrainerConfig::minimal("pendulum", "DroQ");
    cfg.n = 2;
    cfg.m = 2;
    cfg.g = 20;
    cfg.batch_size = 64;
    cfg.hidden_width = 32;
    cfg.random_starting_steps = 1000;
    cfg.total_env_steps = 8000;
    cfg.epoch_steps = 1000;
    cfg.eval_episodes = 10;
    cfg.checkpoint_every_epochs = 0;
    cfg.seed = 1;

    let out = std::path::Path::new("out/pendulum");
    println!("training {} on {} for {} env steps (G = {})", cfg.variant, cfg.env, cfg.total_env_steps, cfg.g);
    let records = run_experiment(&cfg, out).expect("training run failed");
    println!("{:>8} {:>12} {:>10}", "step", "avg_return", "avg_bias");
    for r in &records {
        println!("{:>8} {:>12.2} {:>10.3}", r.env_step, r.avg_return, r.avg_bias);
    }
    println!("artifacts in {}", out.display());
}
