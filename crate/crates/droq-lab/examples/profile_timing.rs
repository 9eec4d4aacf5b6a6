//! Wall-time comparison of the update loop across ensemble sizes: DroQ with
//! two dropout Q-functions against REDQ with N in {2, 3, 5, 10}, all at the
//! same network sizes. Mirrors the per-loop / per-critic-update timing
//! methodology (median over timed loops after warmup, pre-filled buffer).
//!
//! Run with: cargo run --release --example profile_timing

use droq_lab::agent::TrainerConfig;
use droq_lab::profile::profile_update;

fn main() {
    let mut base = TrainerConfig::minimal("pendulum", "DroQ");
    base.g = 20;
    base.batch_size = 64;
    base.hidden_width = 256;
    base.seed = 11;

    let warmup = 3;
    let loops = 25;
    println!("{:<8} {:>16} {:>20}", "variant", "ms/loop", "ms/critic-update");
    let mut droq_ms = 0.0;
    let mut redq10_ms = 0.0;
    for tag in ["DroQ", "REDQ2", "REDQ3", "REDQ5", "REDQ10"] {
        let mut cfg = base.clone();
        cfg.variant = tag.to_string();
        let report = profile_update(&cfg.resolve().expect("config"), warmup, loops)
            .expect("profile run failed");
        println!(
            "{:<8} {:>16.1} {:>20.1}",
            tag, report.wall_ms_per_loop, report.wall_ms_per_qupdate
        );
        match tag {
            "DroQ" => droq_ms = report.wall_ms_per_loop,
            "REDQ10" => redq10_ms = report.wall_ms_per_loop,
            _ => {}
        }
    }
    println!();
    println!("REDQ10 / DroQ per-loop ratio: {:.2}", redq10_ms / droq_ms);
}
