//! Scalar linear-quadratic-Gaussian task with a closed-form Q-function under
//! linear policies, used to validate the bias estimator against ground truth.
//!
//! Dynamics: x' = a*x + b*u + w with w ~ N(0, noise_std^2);
//! reward -(x^2 + 0.1 u^2); initial state x0 ~ N(0, 0.5^2).

use super::{validate_action, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub const DYN_A: f64 = 0.9;
pub const DYN_B: f64 = 0.5;
pub const DEFAULT_NOISE_STD: f64 = 0.1;
pub const ACTION_COST: f64 = 0.1;
const INIT_STD: f64 = 0.5;
const MAX_EPISODE_STEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct LqgEnv {
    x: f64,
    noise_std: f64,
    steps: usize,
    noise: RandomStream,
}

impl LqgEnv {
    pub fn new() -> Self {
        Self::with_noise(DEFAULT_NOISE_STD)
    }

    /// Zero `noise_std` makes rollouts deterministic, which removes sampling
    /// noise from Monte-Carlo returns entirely.
    pub fn with_noise(noise_std: f64) -> Self {
        Self {
            x: 0.0,
            noise_std,
            steps: 0,
            noise: RandomStream::new(0),
        }
    }

    pub fn state(&self) -> f64 {
        self.x
    }

    pub fn set_state(&mut self, x: f64) {
        self.x = x;
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }
}

impl Default for LqgEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for LqgEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 1,
            act_dim: 1,
            max_episode_steps: MAX_EPISODE_STEPS,
        }
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Vec<f64> {
        self.x = INIT_STD * rng.normal();
        self.steps = 0;
        // process noise for the episode comes from a child of the same stream
        self.noise = rng.split();
        vec![self.x]
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        validate_action(action, 1)?;
        let u = action[0].clamp(-1.0, 1.0);
        let reward = -(self.x * self.x + ACTION_COST * u * u);
        let w = if self.noise_std > 0.0 {
            self.noise_std * self.noise.normal()
        } else {
            0.0
        };
        self.x = DYN_A * self.x + DYN_B * u + w;
        self.steps += 1;
        Ok(StepResult {
            obs: vec![self.x],
            reward,
            terminal: false,
            truncated: self.steps >= MAX_EPISODE_STEPS,
        })
    }
}

/// Closed-form Q^pi(x, u) for the linear policy u = -k*x under discount
/// `gamma`, from the scalar discounted Lyapunov recursion:
/// V(x) = -p x^2 - c with p = (1 + 0.1 k^2) / (1 - gamma f^2), f = a - b k,
/// c = gamma p noise_var / (1 - gamma), and
/// Q(x, u) = -(x^2 + 0.1 u^2) + gamma (-p E[x'^2] - c).
pub fn lqg_true_q(env: &LqgEnv, k: f64, gamma: f64, x: f64, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Domain(format!("gamma {gamma} outside [0, 1)")));
    }
    let f = DYN_A - DYN_B * k;
    if f.abs() * gamma.sqrt() >= 1.0 {
        return Err(Error::Domain(format!(
            "closed loop unstable: |a - b k| sqrt(gamma) = {} >= 1",
            f.abs() * gamma.sqrt()
        )));
    }
    let noise_var = env.noise_std * env.noise_std;
    let p = (1.0 + ACTION_COST * k * k) / (1.0 - gamma * f * f);
    let c = if gamma > 0.0 {
        gamma * p * noise_var / (1.0 - gamma)
    } else {
        0.0
    };
    let next_mean = DYN_A * x + DYN_B * u;
    let e_next_sq = next_mean * next_mean + noise_var;
    Ok(-(x * x + ACTION_COST * u * u) + gamma * (-p * e_next_sq - c))
}
