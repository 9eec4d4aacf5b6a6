//! The unified training loop: act, store, then G critic updates with Polyak
//! target smoothing, then one policy update, for every algorithm variant.

use std::io::{Read, Write};
use std::time::Instant;

use crate::adam::AdamState;
use crate::agent::config::ResolvedConfig;
use crate::agent::ops::{compute_target, policy_update_step, q_update_step, Batch};
use crate::checkpoint;
use crate::envs::{EnvKind, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::policy::{SquashedGaussianPolicy, TemperatureState};
use crate::q_ensemble::{QEnsemble, QNetConfig, WhichNets};
use crate::replay::{ReplayBuffer, Transition};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateCounters {
    pub target_computations: u64,
    pub member_updates: u64,
    pub polyak_updates: u64,
    pub policy_updates: u64,
}

/// Loss and gradient snapshot from the last captured critic update.
#[derive(Debug, Clone)]
pub struct UpdateSnapshot {
    pub losses: Vec<f64>,
    pub member_grads: Vec<Vec<f64>>,
    pub policy_loss: f64,
}

/// Wall time of one outer-loop iteration and of its critic-update block.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepTiming {
    pub loop_ns: u128,
    pub qupdate_ns: u128,
}

pub struct Trainer {
    cfg: ResolvedConfig,
    env: EnvKind,
    env_spec: EnvSpec,
    ensemble: QEnsemble,
    policy: SquashedGaussianPolicy,
    temperature: TemperatureState,
    q_optimizers: Vec<AdamState>,
    policy_optimizer: AdamState,
    buffer: ReplayBuffer,
    env_rng: RandomStream,
    acting_rng: RandomStream,
    update_rng: RandomStream,
    eval_root: RandomStream,
    current_obs: Vec<f64>,
    env_step: u64,
    counters: UpdateCounters,
    last_snapshot: Option<UpdateSnapshot>,
}

impl Trainer {
    pub fn new(cfg: ResolvedConfig) -> Result<Self> {
        let mut env = EnvKind::from_name(&cfg.env)?;
        let env_spec = env.spec();

        // fixed split order; the policy draw comes from a dedicated child so
        // policy parameters are identical across variants at equal seed
        let mut root = RandomStream::new(cfg.seed);
        let mut init_rng = root.split();
        let mut policy_rng = init_rng.split();
        let mut env_rng = root.split();
        let acting_rng = root.split();
        let update_rng = root.split();
        let eval_root = root.split();

        let policy = SquashedGaussianPolicy::new(
            env_spec.obs_dim,
            env_spec.act_dim,
            cfg.hidden_width,
            &mut policy_rng,
        )?;
        let qnet_config = QNetConfig {
            obs_dim: env_spec.obs_dim,
            act_dim: env_spec.act_dim,
            hidden_width: cfg.hidden_width,
            hidden_layers: cfg.hidden_layers,
            dropout_rate: cfg.dropout_rate,
            normalization: cfg.normalization,
            dropout_placement: cfg.dropout_placement,
        };
        let ensemble = QEnsemble::new(qnet_config, cfg.variant.ensemble_size(), &mut init_rng)?;

        let q_optimizers = (0..ensemble.size())
            .map(|i| AdamState::for_network(ensemble.member(WhichNets::Online, i), cfg.lr))
            .collect();
        let policy_optimizer = AdamState::for_network(policy.network(), cfg.lr);
        let target_entropy = cfg
            .target_entropy
            .unwrap_or(-(env_spec.act_dim as f64));
        let temperature = TemperatureState::new(target_entropy, cfg.lr);
        let buffer = ReplayBuffer::new(cfg.buffer_capacity, env_spec.obs_dim, env_spec.act_dim)?;
        let current_obs = env.reset(&mut env_rng);

        Ok(Self {
            cfg,
            env,
            env_spec,
            ensemble,
            policy,
            temperature,
            q_optimizers,
            policy_optimizer,
            buffer,
            env_rng,
            acting_rng,
            update_rng,
            eval_root,
            current_obs,
            env_step: 0,
            counters: UpdateCounters::default(),
            last_snapshot: None,
        })
    }

    pub fn cfg(&self) -> &ResolvedConfig {
        &self.cfg
    }

    pub fn env_spec(&self) -> EnvSpec {
        self.env_spec
    }

    pub fn env_step(&self) -> u64 {
        self.env_step
    }

    pub fn policy(&self) -> &SquashedGaussianPolicy {
        &self.policy
    }

    pub fn ensemble(&self) -> &QEnsemble {
        &self.ensemble
    }

    pub fn temperature(&self) -> &TemperatureState {
        &self.temperature
    }

    pub fn counters(&self) -> &UpdateCounters {
        &self.counters
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn last_snapshot(&self) -> Option<&UpdateSnapshot> {
        self.last_snapshot.as_ref()
    }

    /// Per-episode evaluation stream, independent of evaluation order.
    pub fn eval_stream(&self, epoch: u64, episode: u64) -> RandomStream {
        self.eval_root.derive(epoch * 1_000_003 + episode)
    }

    /// A fresh environment instance of the configured kind.
    pub fn fresh_env(&self) -> Result<EnvKind> {
        EnvKind::from_name(&self.cfg.env)
    }

    fn updates_enabled(&self) -> bool {
        // no gradient updates during the random-start phase
        self.env_step > self.cfg.random_starting_steps
    }

    /// One outer-loop iteration: act, store the transition, then (past the
    /// random-start phase) G critic updates with Polyak smoothing and one
    /// policy update on the last mini-batch.
    pub fn step_env(&mut self, capture_stats: bool) -> Result<StepTiming> {
        let loop_start = Instant::now();

        let action = if self.env_step < self.cfg.random_starting_steps {
            (0..self.env_spec.act_dim)
                .map(|_| self.acting_rng.uniform(-1.0, 1.0))
                .collect::<Vec<f64>>()
        } else {
            self.policy.sample(&self.current_obs, &mut self.acting_rng)?.0
        };

        let step = self.env.step(&action)?;
        self.buffer.push(Transition {
            obs: self.current_obs.clone(),
            action,
            reward: step.reward,
            next_obs: step.obs.clone(),
            terminal: step.terminal,
        })?;
        self.env_step += 1;
        self.current_obs = if step.terminal || step.truncated {
            self.env.reset(&mut self.env_rng)
        } else {
            step.obs
        };

        let mut timing = StepTiming::default();
        if self.updates_enabled() {
            let update_start = Instant::now();
            let mut last_batch: Option<Batch> = None;
            for g in 0..self.cfg.g {
                let transitions = self.buffer.sample(self.cfg.batch_size, &mut self.update_rng)?;
                let batch = Batch::from_transitions(&transitions)?;
                let y = compute_target(
                    &self.cfg.variant,
                    &batch,
                    &mut self.ensemble,
                    &self.policy,
                    self.temperature.alpha(),
                    self.cfg.gamma,
                    &mut self.update_rng,
                )?;
                self.counters.target_computations += 1;

                let capture = capture_stats && g + 1 == self.cfg.g;
                let (losses, grads) = q_update_step(
                    &batch,
                    &y,
                    &mut self.ensemble,
                    &mut self.q_optimizers,
                    &mut self.update_rng,
                    capture,
                )?;
                self.counters.member_updates += losses.len() as u64;
                self.ensemble.polyak_update(self.cfg.rho)?;
                self.counters.polyak_updates += 1;
                if capture {
                    self.last_snapshot = Some(UpdateSnapshot {
                        losses,
                        member_grads: grads.unwrap_or_default(),
                        policy_loss: f64::NAN,
                    });
                }
                last_batch = Some(batch);
            }
            timing.qupdate_ns = update_start.elapsed().as_nanos();

            let batch = last_batch.expect("G >= 1 guarantees a batch");
            let policy_loss = policy_update_step(
                &self.cfg.variant,
                &batch,
                &mut self.ensemble,
                &mut self.policy,
                &mut self.temperature,
                &mut self.policy_optimizer,
                &mut self.update_rng,
            )?;
            self.counters.policy_updates += 1;
            if capture_stats {
                if let Some(s) = self.last_snapshot.as_mut() {
                    s.policy_loss = policy_loss;
                }
            }
        }
        timing.loop_ns = loop_start.elapsed().as_nanos();
        Ok(timing)
    }

    /// Runs `n` env steps; optionally captures the loss/gradient snapshot on
    /// the final update iteration of the last step.
    pub fn run_steps(&mut self, n: u64, capture_stats_on_last: bool) -> Result<Vec<StepTiming>> {
        let mut timings = Vec::with_capacity(n as usize);
        for i in 0..n {
            let capture = capture_stats_on_last && i + 1 == n;
            timings.push(self.step_env(capture)?);
        }
        Ok(timings)
    }

    /// Pre-fills the buffer with uniformly random interactions without
    /// advancing the training step counter; used by the profiling harness.
    pub fn prefill_buffer(&mut self, transitions: usize) -> Result<()> {
        for _ in 0..transitions {
            let action: Vec<f64> = (0..self.env_spec.act_dim)
                .map(|_| self.acting_rng.uniform(-1.0, 1.0))
                .collect();
            let step = self.env.step(&action)?;
            self.buffer.push(Transition {
                obs: self.current_obs.clone(),
                action,
                reward: step.reward,
                next_obs: step.obs.clone(),
                terminal: step.terminal,
            })?;
            self.current_obs = if step.terminal || step.truncated {
                self.env.reset(&mut self.env_rng)
            } else {
                step.obs
            };
        }
        Ok(())
    }

    /// Serializes policy, ensemble, and temperature into one container.
    pub fn save_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        let mut sections: Vec<(String, &crate::network::Network)> =
            vec![("policy".into(), self.policy.network())];
        for i in 0..self.ensemble.size() {
            sections.push((format!("online_{i}"), self.ensemble.member(WhichNets::Online, i)));
        }
        for i in 0..self.ensemble.size() {
            sections.push((format!("target_{i}"), self.ensemble.member(WhichNets::Target, i)));
        }
        let named: Vec<(&str, &crate::network::Network)> =
            sections.iter().map(|(n, net)| (n.as_str(), *net)).collect();
        checkpoint::write_container(
            w,
            "droq-lab/run",
            &named,
            &[("log_alpha", self.temperature.log_alpha())],
        )
    }

    /// Restores networks and temperature from [`Trainer::save_checkpoint`]
    /// output; architecture must match the current configuration.
    pub fn restore_checkpoint(&mut self, r: &mut impl Read) -> Result<()> {
        let (header, nets) = checkpoint::read_container(r)?;
        if header.kind != "droq-lab/run" {
            return Err(Error::Checkpoint("not a run checkpoint".into()));
        }
        let k = self.ensemble.size();
        if nets.len() != 1 + 2 * k {
            return Err(Error::Checkpoint(format!(
                "expected {} sections, found {}",
                1 + 2 * k,
                nets.len()
            )));
        }
        let mut it = nets.into_iter();
        let policy_net = it.next().expect("length checked");
        if policy_net.input_width() != self.env_spec.obs_dim {
            return Err(Error::Checkpoint("policy dims do not match".into()));
        }
        *self.policy.network_mut() = policy_net;
        for i in 0..k {
            *self.ensemble.member_mut(WhichNets::Online, i) = it.next().expect("length checked");
        }
        for i in 0..k {
            *self.ensemble.member_mut(WhichNets::Target, i) = it.next().expect("length checked");
        }
        if let Some((_, v)) = header.scalars.iter().find(|(n, _)| n == "log_alpha") {
            self.temperature.set_log_alpha(*v);
        }
        Ok(())
    }

    /// Writes the replay contents for resumable runs.
    pub fn dump_buffer(&self, w: &mut impl Write) -> Result<()> {
        checkpoint_buffer::write(w, &self.buffer, self.env_spec)
    }

    pub fn restore_buffer(&mut self, r: &mut impl Read) -> Result<()> {
        checkpoint_buffer::read_into(r, &mut self.buffer, self.env_spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::config::TrainerConfig;
    use crate::agent::ops::Batch;
    use crate::layers::TrainOptions;
    use crate::policy::{head_backward, head_forward};
    use crate::tensor::Tensor;

    fn small_cfg(variant: &str) -> ResolvedConfig {
        let mut cfg = TrainerConfig::minimal("pendulum", variant);
        cfg.n = 2;
        cfg.m = 2;
        cfg.g = 1;
        cfg.batch_size = 4;
        cfg.hidden_width = 16;
        cfg.random_starting_steps = 8;
        cfg.buffer_capacity = 1000;
        cfg.seed = 93;
        cfg.resolve().unwrap()
    }

    fn all_params(t: &Trainer) -> Vec<f64> {
        let mut out: Vec<f64> = t
            .policy
            .network()
            .params()
            .flat_map(|p| p.values().to_vec())
            .collect();
        for which in [WhichNets::Online, WhichNets::Target] {
            for i in 0..t.ensemble.size() {
                out.extend(
                    t.ensemble
                        .member(which, i)
                        .params()
                        .flat_map(|p| p.values().to_vec()),
                );
            }
        }
        out.push(t.temperature.log_alpha());
        out
    }

    #[test]
    fn no_updates_during_random_start_phase() {
        let mut t = Trainer::new(small_cfg("SAC")).unwrap();
        let before = all_params(&t);
        t.run_steps(8, false).unwrap();
        assert_eq!(all_params(&t), before);
        assert_eq!(t.counters().policy_updates, 0);
        // the very next step performs updates
        t.step_env(false).unwrap();
        assert_ne!(all_params(&t), before);
        assert_eq!(t.counters().policy_updates, 1);
    }

    #[test]
    fn update_counters_follow_the_loop_structure() {
        let mut cfg = TrainerConfig::minimal("pendulum", "REDQ");
        cfg.n = 3;
        cfg.m = 2;
        cfg.g = 20;
        cfg.batch_size = 8;
        cfg.hidden_width = 8;
        cfg.random_starting_steps = 10;
        cfg.seed = 5;
        let mut t = Trainer::new(cfg.resolve().unwrap()).unwrap();
        t.run_steps(10, false).unwrap(); // random phase
        t.run_steps(3, false).unwrap();
        let c = t.counters();
        assert_eq!(c.target_computations, 3 * 20);
        assert_eq!(c.polyak_updates, 3 * 20);
        assert_eq!(c.member_updates, 3 * 20 * 3);
        assert_eq!(c.policy_updates, 3);
    }

    #[test]
    fn equal_seed_equal_trajectory() {
        let mut a = Trainer::new(small_cfg("DroQ")).unwrap();
        let mut b = Trainer::new(small_cfg("DroQ")).unwrap();
        a.run_steps(20, false).unwrap();
        b.run_steps(20, false).unwrap();
        assert_eq!(all_params(&a), all_params(&b));
    }

    #[test]
    fn run_checkpoint_roundtrip_restores_parameters() {
        let mut a = Trainer::new(small_cfg("SAC")).unwrap();
        a.run_steps(12, false).unwrap();
        let mut bytes = Vec::new();
        a.save_checkpoint(&mut bytes).unwrap();
        let mut b = Trainer::new(small_cfg("SAC")).unwrap();
        b.restore_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(all_params(&a), all_params(&b));
    }

    #[test]
    fn buffer_dump_roundtrip() {
        let mut a = Trainer::new(small_cfg("SAC")).unwrap();
        a.run_steps(10, false).unwrap();
        let mut bytes = Vec::new();
        a.dump_buffer(&mut bytes).unwrap();
        let mut b = Trainer::new(small_cfg("SAC")).unwrap();
        b.restore_buffer(&mut bytes.as_slice()).unwrap();
        assert_eq!(b.buffer_len(), a.buffer_len());
        let x: Vec<_> = a.buffer.iter_ordered().cloned().collect();
        let y: Vec<_> = b.buffer.iter_ordered().cloned().collect();
        assert_eq!(x, y);
    }

    /// Hand-rolled single-step SAC trace: the textbook update sequence
    /// written out against the raw primitives must reproduce one trainer
    /// step bit-for-bit (G = 1, N = M = 2, no dropout, no normalization,
    /// min-over-ensemble policy objective).
    #[test]
    fn sac_step_matches_a_hand_rolled_trace() {
        let cfg = small_cfg("SAC");
        let mut a = Trainer::new(cfg.clone()).unwrap();
        let mut b = Trainer::new(cfg.clone()).unwrap();
        a.run_steps(8, false).unwrap();
        b.run_steps(8, false).unwrap();

        // the step under test, via the trainer
        a.step_env(false).unwrap();

        // the same step, written out by hand on trainer B's state
        {
            let gamma = cfg.gamma;
            let rho = cfg.rho;
            let batch_size = cfg.batch_size;

            // line 3: act with the policy, store the transition
            let action = b.policy.sample(&b.current_obs, &mut b.acting_rng).unwrap().0;
            let step = b.env.step(&action).unwrap();
            b.buffer
                .push(Transition {
                    obs: b.current_obs.clone(),
                    action,
                    reward: step.reward,
                    next_obs: step.obs.clone(),
                    terminal: step.terminal,
                })
                .unwrap();
            b.env_step += 1;
            b.current_obs = if step.terminal || step.truncated {
                b.env.reset(&mut b.env_rng)
            } else {
                step.obs
            };

            // line 5: sample the mini-batch
            let transitions = b.buffer.sample(batch_size, &mut b.update_rng).unwrap();
            let batch = Batch::from_transitions(&transitions).unwrap();

            // line 6: y = r + gamma * (min_i Q_target_i(s', a') - alpha log pi)
            let alpha = b.temperature.alpha();
            let (next_act, logp) = b
                .policy
                .sample_batch(&batch.next_obs, &mut b.update_rng)
                .unwrap();
            let input_next = batch.next_obs.concat_cols(&next_act).unwrap();
            let q0 = b.ensemble.member_mut(WhichNets::Target, 0);
            let t0 = q0
                .forward_train(
                    &input_next,
                    &mut b.update_rng,
                    TrainOptions { dropout_active: true, update_running_stats: false },
                )
                .unwrap();
            q0.invalidate_tape();
            let q1 = b.ensemble.member_mut(WhichNets::Target, 1);
            let t1 = q1
                .forward_train(
                    &input_next,
                    &mut b.update_rng,
                    TrainOptions { dropout_active: true, update_running_stats: false },
                )
                .unwrap();
            q1.invalidate_tape();
            let y: Vec<f64> = (0..batch.len())
                .map(|r| {
                    let min_q = t0.at(r, 0).min(t1.at(r, 0));
                    let not_done = if batch.terminal[r] { 0.0 } else { 1.0 };
                    batch.rewards[r] + gamma * not_done * (min_q - alpha * logp[r])
                })
                .collect();

            // line 8: per-member mean-squared regression onto the shared y
            let input = batch.obs.concat_cols(&batch.act).unwrap();
            for i in 0..2 {
                let net = b.ensemble.member_mut(WhichNets::Online, i);
                let pred = net
                    .forward_train(
                        &input,
                        &mut b.update_rng,
                        TrainOptions { dropout_active: true, update_running_stats: true },
                    )
                    .unwrap();
                let rows = batch.len() as f64;
                let mut out_grad = Tensor::zeros(batch.len(), 1);
                for r in 0..batch.len() {
                    out_grad.set(r, 0, 2.0 * (pred.at(r, 0) - y[r]) / rows);
                }
                net.zero_grads();
                net.backward(&out_grad).unwrap();
                b.q_optimizers[i].step(net.params_mut()).unwrap();
            }

            // line 9: polyak smoothing of the target parameters
            b.ensemble.polyak_update(rho).unwrap();

            // line 10: ascend min_i Q_i(s, a) - alpha log pi(a|s)
            let z = b
                .policy
                .network_mut()
                .forward_train(&batch.obs, &mut b.update_rng, TrainOptions::default())
                .unwrap();
            let xi = Tensor::from_fn(batch.len(), 1, |_, _| b.update_rng.normal());
            let (actions, logps, cache) = head_forward(&z, &xi);
            let pol_input = batch.obs.concat_cols(&actions).unwrap();
            let mut outs = Vec::new();
            for i in 0..2 {
                let net = b.ensemble.member_mut(WhichNets::Online, i);
                let out = net
                    .forward_train(
                        &pol_input,
                        &mut b.update_rng,
                        TrainOptions { dropout_active: true, update_running_stats: false },
                    )
                    .unwrap();
                outs.push(out.values().to_vec());
            }
            let mut argmin = vec![0usize; batch.len()];
            for r in 0..batch.len() {
                if outs[1][r] < outs[0][r] {
                    argmin[r] = 1;
                }
            }
            let obs_dim = batch.obs.cols();
            let mut action_grad = Tensor::zeros(batch.len(), 1);
            for i in 0..2 {
                let out_grad = Tensor::from_fn(batch.len(), 1, |r, _| {
                    if argmin[r] == i { 1.0 } else { 0.0 }
                });
                let net = b.ensemble.member_mut(WhichNets::Online, i);
                let gin = net.backward(&out_grad).unwrap();
                for r in 0..batch.len() {
                    let g = action_grad.at(r, 0) + gin.at(r, obs_dim);
                    action_grad.set(r, 0, g);
                }
            }
            let rows = batch.len() as f64;
            for g in action_grad.values_mut() {
                *g *= -1.0 / rows;
            }
            let grad_logp: Vec<f64> = logps.iter().map(|_| alpha / rows).collect();
            let gz = head_backward(&cache, &action_grad, &grad_logp);
            b.policy.network_mut().zero_grads();
            b.policy.network_mut().backward(&gz).unwrap();
            b.policy_optimizer
                .step(b.policy.network_mut().params_mut())
                .unwrap();
            b.temperature.update(&logps);
        }

        let pa = all_params(&a);
        let pb = all_params(&b);
        assert_eq!(pa.len(), pb.len());
        for (i, (x, y)) in pa.iter().zip(&pb).enumerate() {
            assert!(x == y, "parameter {i} differs: {x} vs {y}");
        }
    }
}

mod checkpoint_buffer {
    //! Flat binary dump of replay transitions, oldest first.

    use super::*;

    pub fn write(w: &mut impl Write, buffer: &ReplayBuffer, spec: EnvSpec) -> Result<()> {
        w.write_all(&(buffer.len() as u64).to_le_bytes())?;
        for t in buffer.iter_ordered() {
            for v in t.obs.iter().chain(t.action.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&t.reward.to_le_bytes())?;
            for v in &t.next_obs {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&[t.terminal as u8])?;
        }
        let _ = spec;
        Ok(())
    }

    pub fn read_into(r: &mut impl Read, buffer: &mut ReplayBuffer, spec: EnvSpec) -> Result<()> {
        let mut count_bytes = [0u8; 8];
        r.read_exact(&mut count_bytes)?;
        let count = u64::from_le_bytes(count_bytes);
        let row_len = 2 * spec.obs_dim + spec.act_dim + 1;
        for _ in 0..count {
            let mut row = vec![0u8; row_len * 8 + 1];
            r.read_exact(&mut row)?;
            let vals: Vec<f64> = row[..row_len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let (obs, rest) = vals.split_at(spec.obs_dim);
            let (action, rest) = rest.split_at(spec.act_dim);
            let (reward, next_obs) = rest.split_first().unwrap();
            buffer.push(Transition {
                obs: obs.to_vec(),
                action: action.to_vec(),
                reward: *reward,
                next_obs: next_obs.to_vec(),
                terminal: row[row_len * 8] != 0,
            })?;
        }
        Ok(())
    }
}
