//! Runs the dropout / layer-normalization ablation batch (DroQ, -DO, -LN,
//! -DO-LN) on a short pendulum schedule and tabulates final returns.
//!
//! Run with: cargo run --release --example ablation_study

use droq_lab::agent::TrainerConfig;
use droq_lab::experiment::{read_metrics_csv, run_ablation};

fn main() {
    let mut cfg = TrainerConfig::minimal("pendulum", "DroQ");
    cfg.g = 20;
    cfg.batch_size = 64;
    cfg.hidden_width = 32;
    cfg.random_starting_steps = 1000;
    cfg.total_env_steps = 6000;
    cfg.epoch_steps = 1000;
    cfg.eval_episodes = 10;
    cfg.checkpoint_every_epochs = 0;

    let variants: Vec<String> = ["DroQ", "-DO", "-LN", "-DO-LN"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let out = std::path::Path::new("out/ablation");
    let runs = run_ablation(&cfg, &variants, &[1], out).expect("ablation batch failed");

    println!("{:<10} {:>14} {:>12}", "variant", "final return", "final bias");
    for run in &runs {
        if run.diverged.is_some() {
            println!("{:<10} {:>14} {:>12}", run.variant, "diverged", "-");
            continue;
        }
        let records = read_metrics_csv(&run.metrics_path).expect("metrics parse");
        let last = records.last().expect("at least one epoch");
        println!("{:<10} {:>14.2} {:>12.3}", run.variant, last.avg_return, last.avg_bias);
    }
}
