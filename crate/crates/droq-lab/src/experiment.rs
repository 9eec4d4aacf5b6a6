//! Experiment runner: drives the trainer epoch by epoch, measures return and
//! bias, and writes `metrics.csv`, `config.resolved.json`, periodic
//! checkpoints, and `curves.svg` into the output directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::agent::{Trainer, TrainerConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRecord, CSV_HEADER};
use crate::plot;

/// Process exit codes for the CLI.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Runs one experiment into `out_dir`. On numeric divergence the metrics
/// written so far stay on disk and the error is returned to the caller.
pub fn run_experiment(config: &TrainerConfig, out_dir: &Path) -> Result<Vec<MetricsRecord>> {
    let resolved = config.resolve()?;
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join("config.resolved.json"),
        serde_json::to_string_pretty(&resolved)? + "\n",
    )?;

    let mut trainer = Trainer::new(resolved.clone())?;
    let param_count = trainer.ensemble().count_parameters();
    let env_proto = trainer.fresh_env()?;

    let csv_file = fs::File::create(out_dir.join("metrics.csv"))?;
    let mut csv = BufWriter::new(csv_file);
    writeln!(csv, "{CSV_HEADER}")?;

    let epochs = resolved.total_env_steps / resolved.epoch_steps;
    let mut records = Vec::with_capacity(epochs as usize);
    for epoch in 1..=epochs {
        let run = (|| -> Result<MetricsRecord> {
            let timings = trainer.run_steps(resolved.epoch_steps, true)?;

            let eval_stream = trainer.eval_stream(epoch, 0);
            let (avg_return, trajectories) = metrics::evaluate_return(
                trainer.policy(),
                &env_proto,
                resolved.eval_episodes,
                &eval_stream,
            )?;
            let (avg_bias, std_bias) = metrics::estimate_bias(
                trainer.ensemble(),
                &trajectories,
                resolved.gamma,
                trainer.ensemble().size(),
            )?;

            let (q_loss_mean, q_loss_std, q_grad_mean, q_grad_std) = match trainer.last_snapshot()
            {
                Some(snap) => metrics::q_stats(&snap.losses, &snap.member_grads),
                None => (0.0, 0.0, 0.0, 0.0),
            };

            let (wall_ms_per_loop, wall_ms_per_qupdate) = if resolved.record_wall_times {
                let mut loops: Vec<u128> = timings.iter().map(|t| t.loop_ns).collect();
                let mut qupd: Vec<u128> = timings.iter().map(|t| t.qupdate_ns).collect();
                loops.sort_unstable();
                qupd.sort_unstable();
                let med = |v: &[u128]| {
                    let n = v.len();
                    if n == 0 {
                        0.0
                    } else if n % 2 == 1 {
                        v[n / 2] as f64 / 1e6
                    } else {
                        (v[n / 2 - 1] + v[n / 2]) as f64 / 2e6
                    }
                };
                (med(&loops), med(&qupd))
            } else {
                (0.0, 0.0)
            };

            Ok(MetricsRecord {
                env_step: epoch * resolved.epoch_steps,
                avg_return,
                avg_bias,
                std_bias,
                q_loss_mean,
                q_loss_std,
                q_grad_mean,
                q_grad_std,
                wall_ms_per_loop,
                wall_ms_per_qupdate,
                param_count,
            })
        })();

        match run {
            Ok(record) => {
                writeln!(csv, "{}", record.csv_row())?;
                csv.flush()?;
                records.push(record);
            }
            Err(e) => {
                csv.flush()?;
                return Err(e);
            }
        }

        if resolved.checkpoint_every_epochs > 0 && epoch % resolved.checkpoint_every_epochs == 0 {
            let path = out_dir.join(format!("checkpoint_epoch{epoch}.bin"));
            let mut w = BufWriter::new(fs::File::create(path)?);
            trainer.save_checkpoint(&mut w)?;
            w.flush()?;
        }
    }
    drop(csv);

    fs::write(out_dir.join("curves.svg"), plot::render_curves(&records))?;
    Ok(records)
}

fn sanitize_tag(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// One (variant, seed) outcome of an ablation batch.
#[derive(Debug)]
pub struct AblationRun {
    pub variant: String,
    pub seed: u64,
    pub metrics_path: std::path::PathBuf,
    /// Set when the run stopped on numeric divergence; the metrics written up
    /// to that point remain on disk.
    pub diverged: Option<String>,
}

/// Runs every (variant, seed) combination of an ablation batch, each into its
/// own tagged subdirectory. A diverging run is recorded and the batch
/// continues; any other error aborts.
pub fn run_ablation(
    base: &TrainerConfig,
    variants: &[String],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<AblationRun>> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs variants and seeds".into()));
    }
    let mut outputs = Vec::new();
    for variant in variants {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.variant = variant.clone();
            cfg.seed = seed;
            let run_dir = out_dir.join(format!("{}_s{}", sanitize_tag(variant), seed));
            let diverged = match run_experiment(&cfg, &run_dir) {
                Ok(_) => None,
                Err(Error::Divergence(msg)) => Some(msg),
                Err(e) => return Err(e),
            };
            outputs.push(AblationRun {
                variant: variant.clone(),
                seed,
                metrics_path: run_dir.join("metrics.csv"),
                diverged,
            });
        }
    }
    Ok(outputs)
}

/// Parses a metrics.csv written by [`run_experiment`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(Error::Config(format!("{} is not a metrics.csv", path.display()))),
    }
    lines.map(MetricsRecord::parse_csv_row).collect()
}
