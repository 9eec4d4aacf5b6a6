//! Pendulum swing-up: theta = 0 is upright and unstable, gravity pulls the
//! pole down, and the bounded torque is too weak for a direct swing-up from
//! the bottom, so the agent must pump energy.

use std::f64::consts::PI;

use super::{validate_action, EnvSpec, Environment, StepResult};
use crate::error::Result;
use crate::rng::RandomStream;

const GRAVITY: f64 = 10.0;
const MASS: f64 = 1.0;
const LENGTH: f64 = 1.0;
const DEFAULT_DT: f64 = 0.05;
const TORQUE_SCALE: f64 = 2.0;
const MAX_SPEED: f64 = 8.0;
const MAX_EPISODE_STEPS: usize = 200;

#[derive(Debug, Clone)]
pub struct PendulumEnv {
    theta: f64,
    theta_dot: f64,
    dt: f64,
    steps: usize,
}

/// Wraps an angle into [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl PendulumEnv {
    pub fn new() -> Self {
        Self {
            theta: PI,
            theta_dot: 0.0,
            dt: DEFAULT_DT,
            steps: 0,
        }
    }

    /// Custom integration step, for numerical checks of the dynamics.
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::new()
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot;
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Mechanical energy of the unforced pendulum (kinetic + potential),
    /// conserved by the continuous dynamics at u = 0.
    pub fn energy(&self) -> f64 {
        MASS * LENGTH * LENGTH * self.theta_dot * self.theta_dot / 6.0
            + MASS * GRAVITY * LENGTH * self.theta.cos() / 2.0
    }
}

impl Default for PendulumEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PendulumEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 3,
            act_dim: 1,
            max_episode_steps: MAX_EPISODE_STEPS,
        }
    }

    fn reset(&mut self, rng: &mut RandomStream) -> Vec<f64> {
        self.theta = rng.uniform(-PI, PI);
        self.theta_dot = rng.uniform(-1.0, 1.0);
        self.steps = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        validate_action(action, 1)?;
        let u = TORQUE_SCALE * action[0].clamp(-1.0, 1.0);

        // reward on the state the action was taken in
        let angle = wrap_angle(self.theta);
        let reward =
            -(angle * angle + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);

        // semi-implicit Euler: velocity first, then position
        let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u;
        self.theta_dot = (self.theta_dot + accel * self.dt).clamp(-MAX_SPEED, MAX_SPEED);
        self.theta += self.theta_dot * self.dt;
        self.steps += 1;

        Ok(StepResult {
            obs: self.obs(),
            reward,
            terminal: false,
            truncated: self.steps >= MAX_EPISODE_STEPS,
        })
    }
}
