//! Off-policy maximum-entropy RL laboratory.
//!
//! Implements SAC, REDQ, and the dropout Q-function family (DroQ, DroQ-N,
//! DUVN, Sin-DroQ and their ablations) as one parameterized trainer on top of
//! a self-contained dense-network reverse-mode autodiff core, together with
//! native desk-scale environments (pendulum swing-up and a linear-quadratic-
//! Gaussian task with an analytic Q oracle) and the measurement harness:
//! average return, normalized Q estimation bias, loss/gradient statistics,
//! per-update wall time, and exact parameter counts.
//!
//! See the `examples/` directory for runnable entry points per capability,
//! and the `droq-lab` binary for the experiment CLI.

// index loops over several parallel buffers are the norm in the math kernels
#![allow(clippy::needless_range_loop)]

pub mod adam;
pub mod agent;
pub mod checkpoint;
pub mod cli;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod plot;
pub mod policy;
pub mod profile;
pub mod q_ensemble;
pub mod replay;
pub mod rng;
pub mod tensor;

pub use adam::AdamState;
pub use agent::{AlgorithmVariant, BaseAlgorithm, PolicyObjective, Trainer, TrainerConfig};
pub use envs::{EnvKind, EnvSpec, Environment, LqgEnv, PendulumEnv, StepResult};
pub use error::{Error, Result};
pub use metrics::{EvalTrajectory, MetricsRecord};
pub use layers::{LayerSpec, TrainOptions};
pub use network::{Mode, Network};
pub use policy::{SquashedGaussianPolicy, TemperatureState};
pub use q_ensemble::{DropoutPlacement, Normalization, QEnsemble, QNetConfig, WhichNets};
pub use replay::{ReplayBuffer, Transition};
pub use rng::RandomStream;
pub use tensor::Tensor;
