//! Command-line interface of the `droq-lab` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::agent::TrainerConfig;
use crate::error::Error;
use crate::experiment::{
    self, EXIT_DIVERGED, EXIT_FAILURE, EXIT_INVALID_CONFIG, EXIT_OK,
};
use crate::plot;
use crate::profile;

#[derive(Parser)]
#[command(
    name = "droq-lab",
    about = "Off-policy maximum-entropy RL laboratory: SAC / REDQ / dropout Q-ensembles \
             on native desk-scale environments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write metrics.csv, config.resolved.json,
    /// checkpoints, and curves.svg.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a batch of variants x seeds from one base config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated variant tags, e.g. "DroQ,-DO,-LN,-DO-LN".
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        /// Comma-separated seeds, e.g. "1,2,3,4,5".
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Measure median wall time per loop and per critic-update block.
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        loops: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
    },
    /// Render curves.svg from an existing metrics.csv.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_INVALID_CONFIG,
        Error::Divergence(_) => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn run_inner() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut cfg = TrainerConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let records = experiment::run_experiment(&cfg, &out)?;
            if let Some(last) = records.last() {
                println!(
                    "done: {} epochs, final avg_return {:.3}, final avg_bias {:.4} -> {}",
                    records.len(),
                    last.avg_return,
                    last.avg_bias,
                    out.display()
                );
            } else {
                println!("done: no full epoch completed -> {}", out.display());
            }
            Ok(())
        }
        Command::Ablate {
            config,
            variants,
            seeds,
            out,
        } => {
            let cfg = TrainerConfig::from_path(&config)?;
            let runs = experiment::run_ablation(&cfg, &variants, &seeds, &out)?;
            for r in &runs {
                match &r.diverged {
                    None => println!("{}", r.metrics_path.display()),
                    Some(msg) => println!(
                        "{} (diverged: {msg})",
                        r.metrics_path.display()
                    ),
                }
            }
            Ok(())
        }
        Command::Profile {
            config,
            loops,
            warmup,
        } => {
            let cfg = TrainerConfig::from_path(&config)?.resolve()?;
            let report = profile::profile_update(&cfg, warmup, loops)?;
            println!(
                "variant {} wall_ms_per_loop {:.3} wall_ms_per_qupdate {:.3}",
                cfg.variant.tag, report.wall_ms_per_loop, report.wall_ms_per_qupdate
            );
            Ok(())
        }
        Command::Plot { csv, out } => {
            let records = experiment::read_metrics_csv(&csv)?;
            std::fs::write(&out, plot::render_curves(&records))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    match run_inner() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
