//! Experiment configuration: the JSON schema accepted by the CLI and its
//! resolution into concrete trainer settings.

use serde::{Deserialize, Serialize};

use crate::agent::variant::{AlgorithmVariant, PolicyObjective};
use crate::error::{Error, Result};
use crate::q_ensemble::{DropoutPlacement, Normalization};

pub const DROPOUT_RATE_SWEEP: [f64; 4] = [0.0001, 0.005, 0.01, 0.1];

fn default_n() -> usize {
    10
}
fn default_m() -> usize {
    2
}
fn default_g() -> usize {
    20
}
fn default_gamma() -> f64 {
    0.99
}
fn default_rho() -> f64 {
    0.005
}
fn default_batch_size() -> usize {
    256
}
fn default_dropout_rate() -> f64 {
    0.01
}
fn default_lr() -> f64 {
    3e-4
}
fn default_buffer_capacity() -> usize {
    1_000_000
}
fn default_random_starting_steps() -> u64 {
    5000
}
fn default_total_env_steps() -> u64 {
    30_000
}
fn default_epoch_steps() -> u64 {
    1000
}
fn default_eval_episodes() -> usize {
    10
}
fn default_hidden_width() -> usize {
    256
}
fn default_hidden_layers() -> usize {
    2
}
fn default_checkpoint_every_epochs() -> u64 {
    10
}

/// User-facing configuration (JSON). Optional keys fall back to the standard
/// hyperparameters; `normalization`, `dropout_placement`, and
/// `policy_objective` override what the variant tag implies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub env: String,
    pub variant: String,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(rename = "G", default = "default_g")]
    pub g: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_dropout_rate")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub normalization: Option<Normalization>,
    /// Subset of ["target_q", "current_q", "policy_opt"].
    #[serde(default)]
    pub dropout_placement: Option<Vec<String>>,
    /// "mean_over_ensemble" or "min_over_ensemble".
    #[serde(default)]
    pub policy_objective: Option<PolicyObjective>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_buffer_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_random_starting_steps")]
    pub random_starting_steps: u64,
    #[serde(default = "default_total_env_steps")]
    pub total_env_steps: u64,
    #[serde(default = "default_epoch_steps")]
    pub epoch_steps: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    /// Override for the automatic-entropy target (default: -act_dim).
    #[serde(default)]
    pub target_entropy: Option<f64>,
    #[serde(default = "default_checkpoint_every_epochs")]
    pub checkpoint_every_epochs: u64,
    /// Wall-clock columns in metrics.csv are zero unless enabled; timing
    /// measurements are inherently non-reproducible across runs.
    #[serde(default)]
    pub record_wall_times: bool,
}

impl TrainerConfig {
    pub fn minimal(env: &str, variant: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "env": env, "variant": variant }))
            .expect("minimal config must deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainerConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Validates and resolves the variant tag plus overrides into concrete
    /// settings.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.g == 0 {
            return Err(Error::Config("G must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epoch_steps == 0 {
            return Err(Error::Config("epoch_steps must be positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }

        let (variant, spec) =
            AlgorithmVariant::resolve(&self.variant, self.n, self.m, self.policy_objective)?;

        let dropout_rate = if spec.dropout_on { self.dropout_rate } else { 0.0 };
        let normalization = self.normalization.unwrap_or(spec.normalization);

        let dropout_placement = match &self.dropout_placement {
            Some(list) => {
                let mut p = DropoutPlacement {
                    target_q: false,
                    current_q: false,
                    policy_opt: false,
                };
                for site in list {
                    match site.as_str() {
                        "target_q" => p.target_q = true,
                        "current_q" => p.current_q = true,
                        "policy_opt" => p.policy_opt = true,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown dropout placement '{other}'"
                            )))
                        }
                    }
                }
                p
            }
            None => DropoutPlacement {
                target_q: spec.placement_target_q,
                current_q: spec.placement_current_q,
                policy_opt: spec.placement_policy_opt,
            },
        };

        Ok(ResolvedConfig {
            env: self.env.clone(),
            variant,
            g: self.g,
            gamma: self.gamma,
            rho: self.rho,
            batch_size: self.batch_size,
            dropout_rate,
            normalization,
            dropout_placement,
            lr: self.lr,
            buffer_capacity: self.buffer_capacity,
            random_starting_steps: self.random_starting_steps,
            total_env_steps: self.total_env_steps,
            epoch_steps: self.epoch_steps,
            eval_episodes: self.eval_episodes,
            seed: self.seed,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            target_entropy: self.target_entropy,
            checkpoint_every_epochs: self.checkpoint_every_epochs,
            record_wall_times: self.record_wall_times,
        })
    }
}

/// Fully resolved experiment settings, written to `config.resolved.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub env: String,
    pub variant: AlgorithmVariant,
    pub g: usize,
    pub gamma: f64,
    pub rho: f64,
    pub batch_size: usize,
    /// Effective rate: zero when the variant disables dropout.
    pub dropout_rate: f64,
    pub normalization: Normalization,
    pub dropout_placement: DropoutPlacement,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub random_starting_steps: u64,
    pub total_env_steps: u64,
    pub epoch_steps: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub target_entropy: Option<f64>,
    pub checkpoint_every_epochs: u64,
    pub record_wall_times: bool,
}

impl ResolvedConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
