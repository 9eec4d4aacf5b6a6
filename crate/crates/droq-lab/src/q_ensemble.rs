//! Ensembles of (dropout) Q-functions with target copies.
//!
//! Each Q-network maps a concatenated [state; action] row to one scalar. The
//! hidden stack repeats Linear -> Dropout -> Norm -> ReLU per hidden layer
//! (dropout and norm layers are omitted when disabled, which makes the
//! rate-0 / no-norm configuration exactly the plain SAC/REDQ network), then
//! a final Linear down to width 1.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, TrainOptions};
use crate::network::{Mode, Network};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    LayerNorm,
    LayerNormNoVr,
    BatchNorm,
    GroupNorm2,
}

/// Which of the three algorithm sites evaluate Q with dropout active:
/// the target computation, the critic regression, and the policy objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct DropoutPlacement {
    pub target_q: bool,
    pub current_q: bool,
    pub policy_opt: bool,
}

impl Default for DropoutPlacement {
    fn default() -> Self {
        Self {
            target_q: true,
            current_q: true,
            policy_opt: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub dropout_rate: f64,
    pub normalization: Normalization,
    pub dropout_placement: DropoutPlacement,
}

impl QNetConfig {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden_width: 256,
            hidden_layers: 2,
            dropout_rate: 0.0,
            normalization: Normalization::None,
            dropout_placement: DropoutPlacement::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.act_dim == 0 {
            return Err(Error::Config("obs_dim and act_dim must be positive".into()));
        }
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::Config(
                "hidden_width and hidden_layers must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.normalization == Normalization::GroupNorm2 && !self.hidden_width.is_multiple_of(2) {
            return Err(Error::Config(
                "group normalization needs an even hidden width".into(),
            ));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.obs_dim + self.act_dim
    }

    /// Layer stack per the dropout Q-function architecture.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let w = self.hidden_width;
        let mut specs = Vec::new();
        let mut input = self.input_width();
        for _ in 0..self.hidden_layers {
            specs.push(LayerSpec::Linear { input, output: w });
            if self.dropout_rate > 0.0 {
                specs.push(LayerSpec::Dropout {
                    rate: self.dropout_rate,
                });
            }
            match self.normalization {
                Normalization::None => {}
                Normalization::LayerNorm => specs.push(LayerSpec::LayerNorm { width: w }),
                Normalization::LayerNormNoVr => specs.push(LayerSpec::LayerNormNoVr { width: w }),
                Normalization::BatchNorm => specs.push(LayerSpec::BatchNorm { width: w }),
                Normalization::GroupNorm2 => {
                    specs.push(LayerSpec::GroupNorm { width: w, groups: 2 })
                }
            }
            specs.push(LayerSpec::Relu);
            input = w;
        }
        specs.push(LayerSpec::Linear { input, output: 1 });
        specs
    }

    pub fn build_network(&self, rng: &mut RandomStream) -> Result<Network> {
        self.validate()?;
        let mut net = Network::new(self.input_width(), &self.layer_specs())?;
        net.init_params(rng);
        Ok(net)
    }
}

/// Exact trainable-parameter count for `k` online Q-networks built from
/// `config` (target copies excluded).
pub fn count_parameters(config: &QNetConfig, k: usize) -> usize {
    let w = config.hidden_width;
    let norm_params = match config.normalization {
        Normalization::None => 0,
        _ => 2 * w,
    };
    let mut per_net = 0;
    let mut input = config.input_width();
    for _ in 0..config.hidden_layers {
        per_net += input * w + w + norm_params;
        input = w;
    }
    per_net += input + 1;
    k * per_net
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WhichNets {
    Online,
    Target,
}

#[derive(Debug, Clone)]
pub struct QEnsemble {
    config: QNetConfig,
    online: Vec<Network>,
    target: Vec<Network>,
}

impl QEnsemble {
    /// Builds `k` independently initialized members; target parameters start
    /// as exact copies of the online parameters.
    pub fn new(config: QNetConfig, k: usize, rng: &mut RandomStream) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("ensemble size must be positive".into()));
        }
        config.validate()?;
        let mut online = Vec::with_capacity(k);
        for _ in 0..k {
            let mut member_rng = rng.split();
            online.push(config.build_network(&mut member_rng)?);
        }
        let target = online.clone();
        Ok(Self {
            config,
            online,
            target,
        })
    }

    pub fn config(&self) -> &QNetConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.online.len()
    }

    pub fn member(&self, which: WhichNets, i: usize) -> &Network {
        match which {
            WhichNets::Online => &self.online[i],
            WhichNets::Target => &self.target[i],
        }
    }

    pub fn member_mut(&mut self, which: WhichNets, i: usize) -> &mut Network {
        match which {
            WhichNets::Online => &mut self.online[i],
            WhichNets::Target => &mut self.target[i],
        }
    }

    fn check_batch(&self, obs: &Tensor, act: &Tensor) -> Result<()> {
        if obs.cols() != self.config.obs_dim || act.cols() != self.config.act_dim {
            return Err(Error::Config(format!(
                "state-action dims ({}, {}) do not match config ({}, {})",
                obs.cols(),
                act.cols(),
                self.config.obs_dim,
                self.config.act_dim
            )));
        }
        Ok(())
    }

    /// Evaluates member `i` on a batch, one scalar per row. With
    /// `dropout_active` the pass draws fresh masks from `rng`; otherwise
    /// dropout is inactive. Normalization layers see a train-style pass
    /// either way (batch statistics), but running statistics are untouched.
    pub fn q_value(
        &mut self,
        which: WhichNets,
        i: usize,
        obs: &Tensor,
        act: &Tensor,
        dropout_active: bool,
        rng: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        self.check_batch(obs, act)?;
        if i >= self.size() {
            return Err(Error::Config(format!(
                "member index {i} out of range for ensemble of {}",
                self.size()
            )));
        }
        let input = obs.concat_cols(act)?;
        let net = self.member_mut(which, i);
        let out = net.forward_train(
            &input,
            rng,
            TrainOptions {
                dropout_active,
                update_running_stats: false,
            },
        )?;
        // evaluation only: a stray backward must not see this tape
        net.invalidate_tape();
        Ok(out.values().to_vec())
    }

    /// Mask-free, mutation-free evaluation used for measurement.
    pub fn q_value_eval(
        &self,
        which: WhichNets,
        i: usize,
        obs: &Tensor,
        act: &Tensor,
    ) -> Result<Vec<f64>> {
        self.check_batch(obs, act)?;
        let input = obs.concat_cols(act)?;
        let out = self.member(which, i).forward_eval(&input)?;
        Ok(out.values().to_vec())
    }

    /// Mean over online members 1..=m of eval-mode Q values.
    pub fn mean_online_eval(&self, m: usize, obs: &Tensor, act: &Tensor) -> Result<Vec<f64>> {
        if m == 0 || m > self.size() {
            return Err(Error::Config(format!(
                "averaging over {m} members of an ensemble of {}",
                self.size()
            )));
        }
        let mut acc = self.q_value_eval(WhichNets::Online, 0, obs, act)?;
        for i in 1..m {
            let q = self.q_value_eval(WhichNets::Online, i, obs, act)?;
            for (a, b) in acc.iter_mut().zip(&q) {
                *a += b;
            }
        }
        acc.iter_mut().for_each(|v| *v /= m as f64);
        Ok(acc)
    }

    /// Target-network update: phi_bar <- rho * phi_bar + (1 - rho) * phi,
    /// element-wise over every trainable parameter. Online side untouched.
    pub fn polyak_update(&mut self, rho: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("polyak rho {rho} outside [0, 1]")));
        }
        for (t_net, o_net) in self.target.iter_mut().zip(&self.online) {
            for (t, o) in t_net.params_mut().zip(o_net.params()) {
                for (tv, ov) in t.values_mut().iter_mut().zip(o.values()) {
                    *tv = rho * *tv + (1.0 - rho) * ov;
                }
            }
        }
        Ok(())
    }

    /// Exact trainable-parameter count over the online members.
    pub fn count_parameters(&self) -> usize {
        count_parameters(&self.config, self.size())
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for net in self.online.iter_mut().chain(self.target.iter_mut()) {
            net.set_mode(mode);
        }
    }

    /// Serializes all members, online sections then target sections.
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        let mut sections: Vec<(String, &Network)> = Vec::new();
        for (i, net) in self.online.iter().enumerate() {
            sections.push((format!("online_{i}"), net));
        }
        for (i, net) in self.target.iter().enumerate() {
            sections.push((format!("target_{i}"), net));
        }
        let named: Vec<(&str, &Network)> =
            sections.iter().map(|(n, net)| (n.as_str(), *net)).collect();
        checkpoint::write_container(w, "q_ensemble", &named, &[])
    }

    pub fn load(config: QNetConfig, r: &mut impl Read) -> Result<Self> {
        let (header, nets) = checkpoint::read_container(r)?;
        if header.kind != "q_ensemble" || nets.len() % 2 != 0 || nets.is_empty() {
            return Err(Error::Checkpoint("not a q_ensemble checkpoint".into()));
        }
        let k = nets.len() / 2;
        let mut it = nets.into_iter();
        let online: Vec<Network> = (&mut it).take(k).collect();
        let target: Vec<Network> = it.collect();
        Ok(Self {
            config,
            online,
            target,
        })
    }
}
