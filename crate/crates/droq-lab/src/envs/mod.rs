//! Native desk-scale continuous-control environments.
//!
//! Actions live in [-1, 1]^act_dim for every environment. Episodes end by
//! time-limit truncation; neither built-in task has terminal states.

mod lqg;
mod pendulum;

pub use lqg::{lqg_true_q, LqgEnv};
pub use pendulum::PendulumEnv;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub max_episode_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. The stream drives the initial state and any
    /// process noise for the rest of the episode, so a fixed stream yields a
    /// bit-identical trajectory.
    fn reset(&mut self, rng: &mut RandomStream) -> Vec<f64>;

    /// Advances one step. Actions are clamped into [-1, 1] per coordinate;
    /// non-finite actions are a numeric error.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

pub(crate) fn validate_action(action: &[f64], act_dim: usize) -> Result<()> {
    if action.len() != act_dim {
        return Err(Error::Config(format!(
            "action has {} dims, expected {act_dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("non-finite action".into()));
    }
    Ok(())
}

/// Built-in environments, selectable by config key.
#[derive(Debug, Clone)]
pub enum EnvKind {
    Pendulum(PendulumEnv),
    Lqg(LqgEnv),
}

impl EnvKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(EnvKind::Pendulum(PendulumEnv::new())),
            "lqg" => Ok(EnvKind::Lqg(LqgEnv::new())),
            other => Err(Error::Config(format!(
                "unknown env '{other}' (expected 'pendulum' or 'lqg')"
            ))),
        }
    }
}

impl Environment for EnvKind {
    fn spec(&self) -> EnvSpec {
        match self {
            EnvKind::Pendulum(e) => e.spec(),
            EnvKind::Lqg(e) => e.spec(),
        }
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Vec<f64> {
        match self {
            EnvKind::Pendulum(e) => e.reset(rng),
            EnvKind::Lqg(e) => e.reset(rng),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        match self {
            EnvKind::Pendulum(e) => e.step(action),
            EnvKind::Lqg(e) => e.step(action),
        }
    }
}
