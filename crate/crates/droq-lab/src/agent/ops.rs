//! Core update-loop operations shared by every algorithm variant: in-target
//! subset selection, bootstrap target computation, the critic regression
//! step, and the ensemble-backed policy objective.

use crate::adam::AdamState;
use crate::agent::variant::{AlgorithmVariant, PolicyObjective, TargetRule};
use crate::error::{Error, Result};
use crate::layers::TrainOptions;
use crate::policy::{ActionValueObjective, SquashedGaussianPolicy};
use crate::q_ensemble::{QEnsemble, WhichNets};
use crate::replay::Transition;
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// A sampled mini-batch as dense tensors.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Tensor,
    pub act: Tensor,
    pub rewards: Vec<f64>,
    pub next_obs: Tensor,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(transitions: &[&Transition]) -> Result<Batch> {
        if transitions.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let obs_dim = transitions[0].obs.len();
        let act_dim = transitions[0].action.len();
        let rows = transitions.len();
        let mut obs = Tensor::zeros(rows, obs_dim);
        let mut act = Tensor::zeros(rows, act_dim);
        let mut next_obs = Tensor::zeros(rows, obs_dim);
        let mut rewards = Vec::with_capacity(rows);
        let mut terminal = Vec::with_capacity(rows);
        for (r, t) in transitions.iter().enumerate() {
            for (c, v) in t.obs.iter().enumerate() {
                obs.set(r, c, *v);
            }
            for (c, v) in t.action.iter().enumerate() {
                act.set(r, c, *v);
            }
            for (c, v) in t.next_obs.iter().enumerate() {
                next_obs.set(r, c, *v);
            }
            rewards.push(t.reward);
            terminal.push(t.terminal);
        }
        Ok(Batch {
            obs,
            act,
            rewards,
            next_obs,
            terminal,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Samples `m` distinct indices uniformly over the C(n, m) subsets. When
/// m == n the full index set is returned without consuming randomness, so
/// subset-based variants reduce bit-exactly to their full-ensemble
/// counterparts.
pub fn select_subset(n: usize, m: usize, rng: &mut RandomStream) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::Config(format!(
            "subset size {m} invalid for ensemble of {n}"
        )));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    // partial Fisher-Yates: every ordered m-arrangement is equally likely
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.uniform_usize(n - i);
        idx.swap(i, j);
    }
    idx.truncate(m);
    Ok(idx)
}

/// Combines the pieces of the bootstrap target for one row:
/// y = r + gamma * (1 - terminal) * (core - alpha * logp).
#[inline]
pub fn assemble_target(
    reward: f64,
    gamma: f64,
    terminal: bool,
    min_q: f64,
    alpha: f64,
    logp: f64,
) -> f64 {
    let not_done = if terminal { 0.0 } else { 1.0 };
    reward + gamma * not_done * (min_q - alpha * logp)
}

fn row_min(acc: &mut [f64], q: &[f64]) {
    for (a, b) in acc.iter_mut().zip(q) {
        if *b < *a {
            *a = *b;
        }
    }
}

/// Computes the Q target for a batch. Next actions are fresh policy samples
/// (one draw shared by the whole evaluation set), evaluated on target
/// networks per the variant's rule; dropout activity at this site follows
/// the ensemble's placement flags.
pub fn compute_target(
    variant: &AlgorithmVariant,
    batch: &Batch,
    ensemble: &mut QEnsemble,
    policy: &SquashedGaussianPolicy,
    alpha: f64,
    gamma: f64,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let (next_act, logp) = policy.sample_batch(&batch.next_obs, rng)?;
    let dropout_on = ensemble.config().dropout_placement.target_q;

    let core = match variant.target_rule() {
        TargetRule::MinOverFirst { count } => {
            let mut acc =
                ensemble.q_value(WhichNets::Target, 0, &batch.next_obs, &next_act, dropout_on, rng)?;
            for i in 1..count {
                let q = ensemble.q_value(
                    WhichNets::Target,
                    i,
                    &batch.next_obs,
                    &next_act,
                    dropout_on,
                    rng,
                )?;
                row_min(&mut acc, &q);
            }
            acc
        }
        TargetRule::MinOverSubset { n, m } => {
            let subset = select_subset(n, m, rng)?;
            let mut acc = ensemble.q_value(
                WhichNets::Target,
                subset[0],
                &batch.next_obs,
                &next_act,
                dropout_on,
                rng,
            )?;
            for &i in &subset[1..] {
                let q = ensemble.q_value(
                    WhichNets::Target,
                    i,
                    &batch.next_obs,
                    &next_act,
                    dropout_on,
                    rng,
                )?;
                row_min(&mut acc, &q);
            }
            acc
        }
        TargetRule::SingleMember => {
            ensemble.q_value(WhichNets::Target, 0, &batch.next_obs, &next_act, dropout_on, rng)?
        }
        TargetRule::MinOverRepeats { count } => {
            // one dropout Q-function evaluated `count` times; the outputs
            // differ through the independent masks
            let mut acc =
                ensemble.q_value(WhichNets::Target, 0, &batch.next_obs, &next_act, dropout_on, rng)?;
            for _ in 1..count {
                let q = ensemble.q_value(
                    WhichNets::Target,
                    0,
                    &batch.next_obs,
                    &next_act,
                    dropout_on,
                    rng,
                )?;
                row_min(&mut acc, &q);
            }
            acc
        }
    };

    Ok((0..batch.len())
        .map(|b| {
            assemble_target(
                batch.rewards[b],
                gamma,
                batch.terminal[b],
                core[b],
                alpha,
                logp[b],
            )
        })
        .collect())
}

/// Per-member losses plus, when requested, per-member flattened gradients.
pub type QUpdateOutput = (Vec<f64>, Option<Vec<Vec<f64>>>);

/// One critic regression step: every online member takes one Adam step
/// toward the shared target `y`. Returns the per-member losses, plus each
/// member's flattened gradient when `capture_grads` is set.
#[allow(clippy::too_many_arguments)]
pub fn q_update_step(
    batch: &Batch,
    y: &[f64],
    ensemble: &mut QEnsemble,
    optimizers: &mut [AdamState],
    rng: &mut RandomStream,
    capture_grads: bool,
) -> Result<QUpdateOutput> {
    if y.len() != batch.len() {
        return Err(Error::Config("target length does not match batch".into()));
    }
    let input = batch.obs.concat_cols(&batch.act)?;
    let dropout_on = ensemble.config().dropout_placement.current_q;
    let rows = batch.len() as f64;
    let mut losses = Vec::with_capacity(ensemble.size());
    let mut grads = capture_grads.then(Vec::new);

    for i in 0..ensemble.size() {
        let net = ensemble.member_mut(WhichNets::Online, i);
        let pred = net.forward_train(
            &input,
            rng,
            TrainOptions {
                dropout_active: dropout_on,
                update_running_stats: true,
            },
        )?;
        let mut loss = 0.0;
        let mut out_grad = Tensor::zeros(pred.rows(), 1);
        for b in 0..batch.len() {
            let err = pred.at(b, 0) - y[b];
            loss += err * err;
            out_grad.set(b, 0, 2.0 * err / rows);
        }
        loss /= rows;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite critic loss on member {i}"
            )));
        }
        net.zero_grads();
        net.backward(&out_grad)?;
        if let Some(g) = grads.as_mut() {
            g.push(net.flat_grads());
        }
        optimizers[i].step(net.params_mut())?;
        losses.push(loss);
    }
    Ok((losses, grads))
}

/// Action-value objective over the online ensemble for the policy update.
/// Mean aggregation averages `members` networks (or `repeats` stochastic
/// evaluations of member 0 when the variant keeps a single network); min
/// aggregation takes the row-wise minimum over members.
pub struct EnsembleObjective<'a> {
    pub ensemble: &'a mut QEnsemble,
    pub members: usize,
    pub repeats: usize,
    pub objective: PolicyObjective,
}

impl ActionValueObjective for EnsembleObjective<'_> {
    fn value_and_action_grad(
        &mut self,
        obs: &Tensor,
        act: &Tensor,
        rng: &mut RandomStream,
    ) -> Result<(Vec<f64>, Tensor)> {
        let dropout_on = self.ensemble.config().dropout_placement.policy_opt;
        let opts = TrainOptions {
            dropout_active: dropout_on,
            update_running_stats: false,
        };
        let input = obs.concat_cols(act)?;
        let rows = obs.rows();
        let obs_dim = obs.cols();
        let act_dim = act.cols();
        let mut action_grad = Tensor::zeros(rows, act_dim);

        match self.objective {
            PolicyObjective::MeanOverEnsemble => {
                // constant aggregation weights allow interleaved
                // forward/backward, which is what lets a single network be
                // evaluated several times with independent masks
                let evals: Vec<usize> = if self.repeats > 1 {
                    vec![0; self.repeats]
                } else {
                    (0..self.members).collect()
                };
                let count = evals.len() as f64;
                let mut values = vec![0.0; rows];
                let out_grad = Tensor::from_fn(rows, 1, |_, _| 1.0 / count);
                for &i in &evals {
                    let net = self.ensemble.member_mut(WhichNets::Online, i);
                    let out = net.forward_train(&input, rng, opts)?;
                    for (v, o) in values.iter_mut().zip(out.values()) {
                        *v += o / count;
                    }
                    let gin = net.backward(&out_grad)?;
                    for r in 0..rows {
                        for d in 0..act_dim {
                            let g = action_grad.at(r, d) + gin.at(r, obs_dim + d);
                            action_grad.set(r, d, g);
                        }
                    }
                }
                Ok((values, action_grad))
            }
            PolicyObjective::MinOverEnsemble => {
                if self.repeats > 1 {
                    return Err(Error::Config(
                        "min policy objective with repeated single-member evaluation \
                         is not supported"
                            .into(),
                    ));
                }
                let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.members);
                for i in 0..self.members {
                    let net = self.ensemble.member_mut(WhichNets::Online, i);
                    let out = net.forward_train(&input, rng, opts)?;
                    outputs.push(out.values().to_vec());
                }
                let mut argmin = vec![0usize; rows];
                let mut values = outputs[0].clone();
                for (i, out) in outputs.iter().enumerate().skip(1) {
                    for r in 0..rows {
                        if out[r] < values[r] {
                            values[r] = out[r];
                            argmin[r] = i;
                        }
                    }
                }
                for i in 0..self.members {
                    let out_grad = Tensor::from_fn(rows, 1, |r, _| {
                        if argmin[r] == i {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    let net = self.ensemble.member_mut(WhichNets::Online, i);
                    let gin = net.backward(&out_grad)?;
                    for r in 0..rows {
                        for d in 0..act_dim {
                            let g = action_grad.at(r, d) + gin.at(r, obs_dim + d);
                            action_grad.set(r, d, g);
                        }
                    }
                }
                Ok((values, action_grad))
            }
        }
    }
}

/// One policy gradient-ascent step followed by the temperature update.
/// Returns the (minimized) policy loss.
#[allow(clippy::too_many_arguments)]
pub fn policy_update_step(
    variant: &AlgorithmVariant,
    batch: &Batch,
    ensemble: &mut QEnsemble,
    policy: &mut SquashedGaussianPolicy,
    temperature: &mut crate::policy::TemperatureState,
    optimizer: &mut AdamState,
    rng: &mut RandomStream,
) -> Result<f64> {
    let members = ensemble.size();
    let mut objective = EnsembleObjective {
        ensemble,
        members,
        repeats: variant.policy_eval_repeats(),
        objective: variant.policy_objective,
    };
    let alpha = temperature.alpha();
    let (loss, logps) = policy.update_step(&batch.obs, &mut objective, alpha, optimizer, rng)?;
    if !loss.is_finite() {
        return Err(Error::Divergence("non-finite policy loss".into()));
    }
    temperature.update(&logps);
    Ok(loss)
}
