//! Squashed-Gaussian stochastic policy with reparameterized sampling, exact
//! log-density, and automatic entropy-temperature adjustment.
//!
//! The policy network maps an observation to (mu, log sigma) per action
//! dimension. Actions are a = tanh(mu + sigma * xi) with xi ~ N(0, I);
//! the log-density applies the tanh change-of-variables correction.

use std::io::{Read, Write};

use crate::adam::AdamState;
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, TrainOptions};
use crate::network::Network;
use crate::rng::RandomStream;
use crate::tensor::Tensor;

pub const LOG_SIGMA_MIN: f64 = -20.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;
/// Epsilon inside log(1 - tanh^2 + eps), guarding log(0) at saturation.
pub const TANH_EPS: f64 = 1e-6;

const HALF_LOG_TWO_PI: f64 = 0.9189385332046727; // 0.5 * ln(2*pi)

/// Log-density of the squashed Gaussian at action `a` (all |a_d| < 1).
pub fn squashed_gaussian_log_density(mu: &[f64], sigma: &[f64], a: &[f64]) -> f64 {
    let mut logp = 0.0;
    for d in 0..a.len() {
        let u = a[d].atanh();
        let xi = (u - mu[d]) / sigma[d];
        logp += -0.5 * xi * xi - sigma[d].ln() - HALF_LOG_TWO_PI;
        logp -= (1.0 - a[d] * a[d] + TANH_EPS).ln();
    }
    logp
}

/// Everything the head backward needs from the head forward.
#[derive(Debug)]
pub struct HeadCache {
    sigma: Tensor,
    xi: Tensor,
    tanh_u: Tensor,
    /// true where the raw log-sigma output was strictly inside the clamp.
    clamp_pass: Vec<bool>,
}

/// Splits a network output z = [mu | log_sigma] plus noise into actions and
/// per-row log-probabilities.
pub fn head_forward(z: &Tensor, xi: &Tensor) -> (Tensor, Vec<f64>, HeadCache) {
    let act_dim = xi.cols();
    debug_assert_eq!(z.cols(), 2 * act_dim);
    let rows = z.rows();
    let mut actions = Tensor::zeros(rows, act_dim);
    let mut sigma = Tensor::zeros(rows, act_dim);
    let mut tanh_u = Tensor::zeros(rows, act_dim);
    let mut clamp_pass = vec![false; rows * act_dim];
    let mut logps = vec![0.0; rows];
    for r in 0..rows {
        let mut logp = 0.0;
        for d in 0..act_dim {
            let mu = z.at(r, d);
            let ls_raw = z.at(r, act_dim + d);
            let ls = ls_raw.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            clamp_pass[r * act_dim + d] = ls_raw > LOG_SIGMA_MIN && ls_raw < LOG_SIGMA_MAX;
            let s = ls.exp();
            let x = xi.at(r, d);
            let u = mu + s * x;
            let t = u.tanh();
            sigma.set(r, d, s);
            tanh_u.set(r, d, t);
            actions.set(r, d, t);
            logp += -0.5 * x * x - ls - HALF_LOG_TWO_PI - (1.0 - t * t + TANH_EPS).ln();
        }
        logps[r] = logp;
    }
    let cache = HeadCache {
        sigma,
        xi: xi.clone(),
        tanh_u,
        clamp_pass,
    };
    (actions, logps, cache)
}

/// Backward through the head: given dL/da and dL/dlogp, produces dL/dz.
pub fn head_backward(cache: &HeadCache, grad_a: &Tensor, grad_logp: &[f64]) -> Tensor {
    let rows = grad_a.rows();
    let act_dim = grad_a.cols();
    let mut gz = Tensor::zeros(rows, 2 * act_dim);
    for r in 0..rows {
        for d in 0..act_dim {
            let t = cache.tanh_u.at(r, d);
            let one_minus_t2 = 1.0 - t * t;
            // dlogp/du from the tanh correction term
            let dlogp_du = 2.0 * t * one_minus_t2 / (one_minus_t2 + TANH_EPS);
            let du = grad_a.at(r, d) * one_minus_t2 + grad_logp[r] * dlogp_du;
            // mu: u = mu + sigma*xi
            gz.set(r, d, du);
            // log sigma: du/dls = sigma*xi, plus the -ls term in logp
            let mut gls = du * cache.sigma.at(r, d) * cache.xi.at(r, d) - grad_logp[r];
            if !cache.clamp_pass[r * act_dim + d] {
                gls = 0.0;
            }
            gz.set(r, act_dim + d, gls);
        }
    }
    gz
}

/// An action-value objective for the policy update: per-row aggregate value
/// and its gradient with respect to the actions. Implemented over the
/// Q-ensemble by the trainer, and by analytic closures in tests.
pub trait ActionValueObjective {
    fn value_and_action_grad(
        &mut self,
        obs: &Tensor,
        act: &Tensor,
        rng: &mut RandomStream,
    ) -> Result<(Vec<f64>, Tensor)>;
}

#[derive(Debug, Clone)]
pub struct SquashedGaussianPolicy {
    net: Network,
    obs_dim: usize,
    act_dim: usize,
}

impl SquashedGaussianPolicy {
    /// Two ReLU hidden layers, then a linear (mu, log sigma) head.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden_width: usize,
        rng: &mut RandomStream,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Config("policy dims must be positive".into()));
        }
        let w = hidden_width;
        let specs = [
            LayerSpec::Linear { input: obs_dim, output: w },
            LayerSpec::Relu,
            LayerSpec::Linear { input: w, output: w },
            LayerSpec::Relu,
            LayerSpec::Linear { input: w, output: 2 * act_dim },
        ];
        let mut net = Network::new(obs_dim, &specs)?;
        net.init_params(rng);
        Ok(Self {
            net,
            obs_dim,
            act_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn count_params(&self) -> usize {
        self.net.count_params()
    }

    fn draw_noise(&self, rows: usize, rng: &mut RandomStream) -> Tensor {
        Tensor::from_fn(rows, self.act_dim, |_, _| rng.normal())
    }

    /// Reparameterized batch sample: actions in (-1,1) and log-probabilities.
    /// Pure given (parameters, obs, rng state).
    pub fn sample_batch(&self, obs: &Tensor, rng: &mut RandomStream) -> Result<(Tensor, Vec<f64>)> {
        let z = self.net.forward_eval(obs)?;
        let xi = self.draw_noise(obs.rows(), rng);
        let (actions, logps, _) = head_forward(&z, &xi);
        Ok((actions, logps))
    }

    /// Single-state sample.
    pub fn sample(&self, obs: &[f64], rng: &mut RandomStream) -> Result<(Vec<f64>, f64)> {
        let obs_t = Tensor::from_vec(1, self.obs_dim, obs.to_vec())?;
        let (a, logp) = self.sample_batch(&obs_t, rng)?;
        Ok((a.values().to_vec(), logp[0]))
    }

    /// Deterministic evaluation action: tanh(mu).
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let obs_t = Tensor::from_vec(1, self.obs_dim, obs.to_vec())?;
        let z = self.net.forward_eval(&obs_t)?;
        Ok((0..self.act_dim).map(|d| z.at(0, d).tanh()).collect())
    }

    /// Distribution parameters (mu, sigma) at one state.
    pub fn distribution(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let obs_t = Tensor::from_vec(1, self.obs_dim, obs.to_vec())?;
        let z = self.net.forward_eval(&obs_t)?;
        let mu = (0..self.act_dim).map(|d| z.at(0, d)).collect();
        let sigma = (0..self.act_dim)
            .map(|d| z.at(0, self.act_dim + d).clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX).exp())
            .collect();
        Ok((mu, sigma))
    }

    /// One gradient-ascent step on E[objective(s, a) - alpha * log pi(a|s)]
    /// with reparameterized actions. Returns the (minimized) loss value and
    /// the sampled log-probabilities, which the caller feeds to the
    /// temperature update.
    pub fn update_step(
        &mut self,
        obs: &Tensor,
        objective: &mut dyn ActionValueObjective,
        alpha: f64,
        optimizer: &mut AdamState,
        rng: &mut RandomStream,
    ) -> Result<(f64, Vec<f64>)> {
        let batch = obs.rows() as f64;
        let z = self.net.forward_train(obs, rng, TrainOptions::default())?;
        let xi = self.draw_noise(obs.rows(), rng);
        let (actions, logps, cache) = head_forward(&z, &xi);

        let (values, action_grads) = objective.value_and_action_grad(obs, &actions, rng)?;

        // loss = mean(alpha * logp - value); gradients flow through both the
        // action path (via the objective) and the log-probability path.
        let loss = logps
            .iter()
            .zip(&values)
            .map(|(lp, v)| alpha * lp - v)
            .sum::<f64>()
            / batch;

        let mut grad_a = action_grads;
        for g in grad_a.values_mut() {
            *g *= -1.0 / batch;
        }
        let grad_logp: Vec<f64> = logps.iter().map(|_| alpha / batch).collect();
        let gz = head_backward(&cache, &grad_a, &grad_logp);

        self.net.zero_grads();
        self.net.backward(&gz)?;
        optimizer.step(self.net.params_mut())?;
        Ok((loss, logps))
    }

    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        checkpoint::write_container(w, "policy", &[("policy", &self.net)], &[])
    }

    pub fn load(obs_dim: usize, act_dim: usize, r: &mut impl Read) -> Result<Self> {
        let (header, mut nets) = checkpoint::read_container(r)?;
        if header.kind != "policy" || nets.len() != 1 {
            return Err(Error::Checkpoint("not a policy checkpoint".into()));
        }
        let net = nets.pop().expect("length checked");
        if net.input_width() != obs_dim || net.output_width() != 2 * act_dim {
            return Err(Error::Checkpoint(
                "policy checkpoint dims do not match".into(),
            ));
        }
        Ok(Self {
            net,
            obs_dim,
            act_dim,
        })
    }
}

/// Entropy-temperature state: log(alpha) optimized toward a target entropy.
#[derive(Debug, Clone)]
pub struct TemperatureState {
    log_alpha: f64,
    pub target_entropy: f64,
    adam: AdamState,
}

impl TemperatureState {
    pub fn new(target_entropy: f64, lr: f64) -> Self {
        Self {
            log_alpha: 0.2f64.ln(),
            target_entropy,
            adam: AdamState::new(lr, &[1]),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn set_log_alpha(&mut self, v: f64) {
        self.log_alpha = v;
    }

    /// One Adam step on log(alpha) minimizing
    /// mean_b[-alpha * (logp_b + target_entropy)], log-probs held constant.
    pub fn update(&mut self, batch_log_probs: &[f64]) {
        if batch_log_probs.is_empty() {
            return;
        }
        let mean: f64 = batch_log_probs.iter().sum::<f64>() / batch_log_probs.len() as f64;
        let grad = -self.alpha() * (mean + self.target_entropy);
        self.log_alpha = self.adam.step_scalar(self.log_alpha, grad);
    }
}
