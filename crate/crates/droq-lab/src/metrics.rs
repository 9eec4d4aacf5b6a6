//! Measurement procedures: average return over test episodes, normalized
//! Q estimation bias against truncated Monte-Carlo returns, and loss /
//! gradient statistics of the critic updates.

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::policy::SquashedGaussianPolicy;
use crate::q_ensemble::QEnsemble;
use crate::rng::RandomStream;
use crate::tensor::Tensor;

/// One epoch's logged measurements; one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub avg_return: f64,
    pub avg_bias: f64,
    pub std_bias: f64,
    pub q_loss_mean: f64,
    pub q_loss_std: f64,
    pub q_grad_mean: f64,
    pub q_grad_std: f64,
    pub wall_ms_per_loop: f64,
    pub wall_ms_per_qupdate: f64,
    pub param_count: usize,
}

pub const CSV_HEADER: &str = "env_step,avg_return,avg_bias,std_bias,q_loss_mean,q_loss_std,\
q_grad_mean,q_grad_std,wall_ms_per_loop,wall_ms_per_qupdate,param_count";

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.avg_return,
            self.avg_bias,
            self.std_bias,
            self.q_loss_mean,
            self.q_loss_std,
            self.q_grad_mean,
            self.q_grad_std,
            self.wall_ms_per_loop,
            self.wall_ms_per_qupdate,
            self.param_count
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Config(format!(
                "metrics row has {} fields, expected 11",
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad metrics field '{s}'")))
        };
        Ok(MetricsRecord {
            env_step: fields[0]
                .parse()
                .map_err(|_| Error::Config("bad env_step".into()))?,
            avg_return: num(fields[1])?,
            avg_bias: num(fields[2])?,
            std_bias: num(fields[3])?,
            q_loss_mean: num(fields[4])?,
            q_loss_std: num(fields[5])?,
            q_grad_mean: num(fields[6])?,
            q_grad_std: num(fields[7])?,
            wall_ms_per_loop: num(fields[8])?,
            wall_ms_per_qupdate: num(fields[9])?,
            param_count: fields[10]
                .parse()
                .map_err(|_| Error::Config("bad param_count".into()))?,
        })
    }
}

/// Ordered (state, action, reward) triples of one test episode.
#[derive(Debug, Clone, Default)]
pub struct EvalTrajectory {
    pub steps: Vec<(Vec<f64>, Vec<f64>, f64)>,
}

impl EvalTrajectory {
    pub fn undiscounted_return(&self) -> f64 {
        self.steps.iter().map(|(_, _, r)| r).sum()
    }

    /// Discounted Monte-Carlo return from each visited step, truncated at the
    /// episode end with no tail correction.
    pub fn discounted_returns(&self, gamma: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (i, (_, _, r)) in self.steps.iter().enumerate().rev() {
            acc = r + gamma * acc;
            out[i] = acc;
        }
        out
    }
}

fn run_episode<E: Environment + Clone>(
    policy: &SquashedGaussianPolicy,
    env_proto: &E,
    mut stream: RandomStream,
) -> Result<EvalTrajectory> {
    let mut env = env_proto.clone();
    let mut obs = env.reset(&mut stream);
    let mut traj = EvalTrajectory::default();
    loop {
        let action = policy.mean_action(&obs)?;
        let step = env.step(&action)?;
        traj.steps.push((obs, action, step.reward));
        if step.terminal || step.truncated {
            break;
        }
        obs = step.obs;
    }
    Ok(traj)
}

/// Runs `episodes` test episodes with deterministic mean actions and returns
/// the mean undiscounted return plus the trajectories (retained for the bias
/// estimate). Episodes use independent derived streams, so results do not
/// depend on evaluation order; the `DROQ_THREADS` env var (default 1) caps
/// how many run concurrently.
pub fn evaluate_return<E: Environment + Clone + Send + Sync>(
    policy: &SquashedGaussianPolicy,
    env_proto: &E,
    episodes: usize,
    rng: &RandomStream,
) -> Result<(f64, Vec<EvalTrajectory>)> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let threads = std::env::var("DROQ_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
        .min(episodes);

    let trajectories: Vec<EvalTrajectory> = if threads <= 1 {
        (0..episodes)
            .map(|ep| run_episode(policy, env_proto, rng.derive(ep as u64)))
            .collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<EvalTrajectory>>> = (0..episodes).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (t, chunk) in slots.chunks_mut(episodes.div_ceil(threads)).enumerate() {
                let base = t * episodes.div_ceil(threads);
                scope.spawn(move || {
                    for (off, slot) in chunk.iter_mut().enumerate() {
                        let ep = (base + off) as u64;
                        *slot = Some(run_episode(policy, env_proto, rng.derive(ep)));
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("episode slot filled"))
            .collect::<Result<_>>()?
    };

    let mean = trajectories
        .iter()
        .map(|t| t.undiscounted_return())
        .sum::<f64>()
        / episodes as f64;
    Ok((mean, trajectories))
}

/// Normalized estimation error against an arbitrary Q estimate:
/// for every visited (s, a), err = |Q_mc - qhat(s, a)| / mean(Q_mc).
/// Returns (mean, population std) of the normalized errors.
pub fn estimate_bias_with(
    mut qhat: impl FnMut(&[f64], &[f64]) -> Result<f64>,
    trajectories: &[EvalTrajectory],
    gamma: f64,
) -> Result<(f64, f64)> {
    let mut mc_returns = Vec::new();
    let mut estimates = Vec::new();
    for traj in trajectories {
        let returns = traj.discounted_returns(gamma);
        for ((obs, act, _), q_mc) in traj.steps.iter().zip(returns) {
            mc_returns.push(q_mc);
            estimates.push(qhat(obs, act)?);
        }
    }
    if mc_returns.is_empty() {
        return Err(Error::Usage("bias estimate needs at least one pair".into()));
    }
    let normalizer = mc_returns.iter().sum::<f64>() / mc_returns.len() as f64;
    if normalizer.abs() < 1e-9 {
        return Err(Error::DegenerateNormalizer(normalizer));
    }
    let errors: Vec<f64> = mc_returns
        .iter()
        .zip(&estimates)
        .map(|(mc, q)| (mc - q).abs() / normalizer)
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / errors.len() as f64;
    Ok((mean, var.sqrt()))
}

/// Bias of the ensemble estimate Q_hat = mean over the first `members`
/// online networks, evaluated mask-free in eval mode.
pub fn estimate_bias(
    ensemble: &QEnsemble,
    trajectories: &[EvalTrajectory],
    gamma: f64,
    members: usize,
) -> Result<(f64, f64)> {
    // batch all visited pairs through the ensemble in one pass
    let total: usize = trajectories.iter().map(|t| t.steps.len()).sum();
    if total == 0 {
        return Err(Error::Usage("bias estimate needs at least one pair".into()));
    }
    let obs_dim = ensemble.config().obs_dim;
    let act_dim = ensemble.config().act_dim;
    let mut obs = Tensor::zeros(total, obs_dim);
    let mut act = Tensor::zeros(total, act_dim);
    let mut row = 0;
    for traj in trajectories {
        for (o, a, _) in &traj.steps {
            for (c, v) in o.iter().enumerate() {
                obs.set(row, c, *v);
            }
            for (c, v) in a.iter().enumerate() {
                act.set(row, c, *v);
            }
            row += 1;
        }
    }
    let qhat = ensemble.mean_online_eval(members, &obs, &act)?;
    let mut idx = 0;
    estimate_bias_with(
        |_, _| {
            let v = qhat[idx];
            idx += 1;
            Ok(v)
        },
        trajectories,
        gamma,
    )
}

/// Loss and gradient statistics of one critic update: mean/std over the
/// member losses, and mean/std over the scalar components of the
/// member-averaged gradient.
pub fn q_stats(losses: &[f64], member_grads: &[Vec<f64>]) -> (f64, f64, f64, f64) {
    let (loss_mean, loss_std) = mean_std(losses);
    if member_grads.is_empty() || member_grads[0].is_empty() {
        return (loss_mean, loss_std, 0.0, 0.0);
    }
    let m = member_grads.len() as f64;
    let n = member_grads[0].len();
    let mut avg = vec![0.0; n];
    for g in member_grads {
        for (a, v) in avg.iter_mut().zip(g) {
            *a += v / m;
        }
    }
    let (grad_mean, grad_std) = mean_std(&avg);
    (loss_mean, loss_std, grad_mean, grad_std)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvSpec, StepResult};
    use crate::envs::PendulumEnv;

    /// Deterministic stub: constant reward, fixed horizon, no dynamics.
    #[derive(Clone)]
    struct StubEnv {
        reward: f64,
        horizon: usize,
        t: usize,
    }

    impl Environment for StubEnv {
        fn spec(&self) -> EnvSpec {
            EnvSpec {
                obs_dim: 1,
                act_dim: 1,
                max_episode_steps: self.horizon,
            }
        }
        fn reset(&mut self, _rng: &mut RandomStream) -> Vec<f64> {
            self.t = 0;
            vec![0.0]
        }
        fn step(&mut self, _action: &[f64]) -> Result<StepResult> {
            self.t += 1;
            Ok(StepResult {
                obs: vec![self.t as f64],
                reward: self.reward,
                terminal: false,
                truncated: self.t >= self.horizon,
            })
        }
    }

    fn tiny_policy() -> SquashedGaussianPolicy {
        let mut rng = RandomStream::new(0);
        SquashedGaussianPolicy::new(1, 1, 4, &mut rng).unwrap()
    }

    #[test]
    fn zero_reward_env_gives_zero_return() {
        let policy = tiny_policy();
        let env = StubEnv { reward: 0.0, horizon: 5, t: 0 };
        let rng = RandomStream::new(1);
        let (mean, trajs) = evaluate_return(&policy, &env, 10, &rng).unwrap();
        assert_eq!(mean, 0.0);
        assert_eq!(trajs.len(), 10);
        assert!(trajs.iter().all(|t| t.steps.len() == 5));
    }

    #[test]
    fn deterministic_env_and_actions_give_identical_episodes() {
        let policy = tiny_policy();
        let env = StubEnv { reward: -1.5, horizon: 7, t: 0 };
        let rng = RandomStream::new(2);
        let (mean, trajs) = evaluate_return(&policy, &env, 10, &rng).unwrap();
        assert_eq!(mean, -1.5 * 7.0);
        let first = trajs[0].undiscounted_return();
        assert!(trajs.iter().all(|t| t.undiscounted_return() == first));
    }

    #[test]
    fn evaluation_is_independent_of_thread_count() {
        // per-episode derived streams make results identical however the
        // episodes are scheduled
        let mut rng = RandomStream::new(5);
        let policy = SquashedGaussianPolicy::new(3, 1, 8, &mut rng).unwrap();
        let env = PendulumEnv::new();
        let stream = RandomStream::new(31);
        let (serial, trajs1) = evaluate_return(&policy, &env, 6, &stream).unwrap();
        std::env::set_var("DROQ_THREADS", "3");
        let (parallel, trajs2) = evaluate_return(&policy, &env, 6, &stream).unwrap();
        std::env::remove_var("DROQ_THREADS");
        assert_eq!(serial, parallel);
        for (a, b) in trajs1.iter().zip(&trajs2) {
            assert_eq!(a.steps, b.steps);
        }
    }

    #[test]
    fn pendulum_zero_torque_return_matches_direct_simulation() {
        // a policy pinned at action 0 from the hanging state: the harness
        // return must equal a raw env rollout sum
        let mut rng = RandomStream::new(3);
        let mut policy = SquashedGaussianPolicy::new(3, 1, 4, &mut rng).unwrap();
        for p in policy.network_mut().params_mut() {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let env = PendulumEnv::new();
        let stream = RandomStream::new(9);
        let (mean, trajs) = evaluate_return(&policy, &env, 1, &stream).unwrap();

        let mut env2 = PendulumEnv::new();
        let mut ep_stream = stream.derive(0);
        env2.reset(&mut ep_stream);
        let mut total = 0.0;
        for _ in 0..200 {
            total += env2.step(&[0.0]).unwrap().reward;
        }
        assert!((mean - total).abs() < 1e-12, "{mean} vs {total}");
        assert_eq!(trajs[0].steps.len(), 200);
    }

    #[test]
    fn discounted_returns_recursion() {
        let traj = EvalTrajectory {
            steps: vec![
                (vec![0.0], vec![0.0], 1.0),
                (vec![0.0], vec![0.0], 1.0),
            ],
        };
        assert_eq!(traj.discounted_returns(0.5), vec![1.5, 1.0]);
    }

    #[test]
    fn exact_estimates_give_zero_bias() {
        let traj = EvalTrajectory {
            steps: vec![
                (vec![0.0], vec![0.0], 2.0),
                (vec![1.0], vec![0.0], -1.0),
                (vec![2.0], vec![0.0], 0.5),
            ],
        };
        let returns = traj.discounted_returns(0.9);
        let mut idx = 0;
        let (avg, std) = estimate_bias_with(
            |_, _| {
                let v = returns[idx];
                idx += 1;
                Ok(v)
            },
            std::slice::from_ref(&traj),
            0.9,
        )
        .unwrap();
        assert_eq!(avg, 0.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn hand_computed_two_step_bias() {
        // r = (1, 1), gamma = 0.5, qhat = 2.0 everywhere:
        // mc = (1.5, 1.0), normalizer 1.25, errors (0.4, 0.8) -> avg 0.6
        let traj = EvalTrajectory {
            steps: vec![
                (vec![0.0], vec![0.0], 1.0),
                (vec![1.0], vec![0.0], 1.0),
            ],
        };
        let (avg, std) = estimate_bias_with(
            |_, _| Ok(2.0),
            std::slice::from_ref(&traj),
            0.5,
        )
        .unwrap();
        assert!((avg - 0.6).abs() < 1e-12, "avg {avg}");
        assert!((std - 0.2).abs() < 1e-12, "std {std}");
    }

    #[test]
    fn bias_is_invariant_to_positive_scaling() {
        let base = EvalTrajectory {
            steps: vec![
                (vec![0.0], vec![0.0], 1.0),
                (vec![1.0], vec![0.0], -0.3),
                (vec![2.0], vec![0.0], 0.7),
            ],
        };
        let qhat = [1.9, -0.1, 0.4];
        let run = |c: f64| {
            let scaled = EvalTrajectory {
                steps: base
                    .steps
                    .iter()
                    .map(|(o, a, r)| (o.clone(), a.clone(), c * r))
                    .collect(),
            };
            let mut idx = 0;
            estimate_bias_with(
                |_, _| {
                    let v = c * qhat[idx];
                    idx += 1;
                    Ok(v)
                },
                std::slice::from_ref(&scaled),
                0.8,
            )
            .unwrap()
        };
        let (a1, s1) = run(1.0);
        let (a2, s2) = run(37.5);
        assert!((a1 - a2).abs() < 1e-12);
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_normalizer_is_rejected() {
        let traj = EvalTrajectory {
            steps: vec![(vec![0.0], vec![0.0], 0.0)],
        };
        assert!(matches!(
            estimate_bias_with(|_, _| Ok(1.0), std::slice::from_ref(&traj), 0.9),
            Err(Error::DegenerateNormalizer(_))
        ));
    }

    #[test]
    fn q_stats_forced_arithmetic() {
        let (lm, ls, _, _) = q_stats(&[1.0, 3.0], &[]);
        assert_eq!(lm, 2.0);
        assert_eq!(ls, 1.0);
        let (_, _, gm, gs) = q_stats(&[1.0], &[vec![1.0, 2.0], vec![3.0, 4.0]]);
        // member-averaged gradient is (2, 3): mean 2.5, std 0.5
        assert_eq!(gm, 2.5);
        assert_eq!(gs, 0.5);
        let (lm, ls, _, _) = q_stats(&[2.0, 2.0, 2.0], &[]);
        assert_eq!(lm, 2.0);
        assert_eq!(ls, 0.0);
    }

    #[test]
    fn csv_row_roundtrip() {
        let rec = MetricsRecord {
            env_step: 2000,
            avg_return: -123.456,
            avg_bias: 0.125,
            std_bias: 0.5,
            q_loss_mean: 1.5e-3,
            q_loss_std: 2.0,
            q_grad_mean: -0.25,
            q_grad_std: 0.75,
            wall_ms_per_loop: 0.0,
            wall_ms_per_qupdate: 0.0,
            param_count: 141_826,
        };
        let row = rec.csv_row();
        let back = MetricsRecord::parse_csv_row(&row).unwrap();
        assert_eq!(back, rec);
        assert_eq!(CSV_HEADER.split(',').count(), 11);
    }
}
