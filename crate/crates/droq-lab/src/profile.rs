//! Steady-state timing of the training loop: median wall time per outer-loop
//! iteration and per critic-update block, after warmup, on a pre-filled
//! replay buffer.

use crate::agent::{ResolvedConfig, Trainer};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct ProfileReport {
    pub wall_ms_per_loop: f64,
    pub wall_ms_per_qupdate: f64,
}

fn median_ns(mut samples: Vec<u128>) -> f64 {
    samples.sort_unstable();
    let n = samples.len();
    let med = if n % 2 == 1 {
        samples[n / 2] as f64
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) as f64 / 2.0
    };
    med / 1e6
}

/// Builds a trainer for `cfg`, fills the buffer, runs `warmup_loops` full
/// iterations, then reports medians over `timed_loops` iterations.
pub fn profile_update(
    cfg: &ResolvedConfig,
    warmup_loops: usize,
    timed_loops: usize,
) -> Result<ProfileReport> {
    let mut cfg = cfg.clone();
    cfg.random_starting_steps = 0; // measure the update path from the start
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.prefill_buffer(cfg.batch_size.max(1000))?;

    for _ in 0..warmup_loops {
        trainer.step_env(false)?;
    }
    let mut loop_ns = Vec::with_capacity(timed_loops);
    let mut qupdate_ns = Vec::with_capacity(timed_loops);
    for _ in 0..timed_loops {
        let t = trainer.step_env(false)?;
        loop_ns.push(t.loop_ns);
        qupdate_ns.push(t.qupdate_ns);
    }
    Ok(ProfileReport {
        wall_ms_per_loop: median_ns(loop_ns),
        wall_ms_per_qupdate: median_ns(qupdate_ns),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TrainerConfig;

    #[test]
    fn qupdate_time_is_within_the_loop_time() {
        let mut cfg = TrainerConfig::minimal("pendulum", "SAC");
        cfg.hidden_width = 16;
        cfg.batch_size = 8;
        cfg.g = 2;
        cfg.seed = 3;
        let report = profile_update(&cfg.resolve().unwrap(), 2, 9).unwrap();
        assert!(report.wall_ms_per_qupdate <= report.wall_ms_per_loop);
        assert!(report.wall_ms_per_loop > 0.0);
    }

    #[test]
    fn median_of_even_and_odd_sample_counts() {
        assert_eq!(median_ns(vec![3_000_000, 1_000_000, 2_000_000]), 2.0);
        assert_eq!(median_ns(vec![1_000_000, 2_000_000, 3_000_000, 4_000_000]), 2.5);
    }
}
