use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{Dataset, NormStats, Provenance};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, VelocityModel};
use crate::solver::{integrate, SolverSchedule};

use super::task::{Env, Expert, TaskSpec};

/// Maps observations to actions, possibly stochastically.
pub trait Policy {
    /// Called once at the start of every episode.
    fn reset(&mut self, _rng: &mut ChaCha8Rng) {}

    fn act(&mut self, env: &Env<'_>, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;

    /// Velocity-field evaluations spent per action (0 for non-learned policies).
    fn field_evals_per_action(&self) -> usize {
        0
    }
}

/// The scripted expert as a policy. It reads the environment directly, so it
/// is only meaningful as a reference.
#[derive(Debug, Clone, Default)]
pub struct ExpertPolicy {
    expert: Option<Expert>,
}

impl Policy for ExpertPolicy {
    fn reset(&mut self, _rng: &mut ChaCha8Rng) {
        self.expert = None;
    }

    fn act(&mut self, env: &Env<'_>, _obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let expert = self.expert.get_or_insert_with(|| Expert::new(env, rng));
        Ok(expert.act(env, rng))
    }
}

/// Wraps a plain closure `obs -> action`.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    fn act(&mut self, _env: &Env<'_>, obs: &[f64], _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok((self.0)(obs))
    }
}

/// Samples an action by integrating a learned velocity field from Gaussian noise.
#[derive(Debug, Clone)]
pub struct FlowPolicy<'a> {
    pub model: &'a VelocityModel,
    pub norm: &'a NormStats,
    pub schedule: SolverSchedule,
}

impl<'a> FlowPolicy<'a> {
    pub fn new(checkpoint: &'a Checkpoint, schedule: SolverSchedule) -> Self {
        Self {
            model: &checkpoint.model,
            norm: &checkpoint.norm,
            schedule,
        }
    }
}

impl Policy for FlowPolicy<'_> {
    fn act(&mut self, _env: &Env<'_>, obs: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let o = self.norm.normalise_obs(obs);
        let a0: Vec<f64> = (0..self.model.action_dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let traj = integrate(self.model, &a0, &o, &self.schedule)?;
        Ok(self.norm.denormalise_action(traj.final_state()))
    }

    fn field_evals_per_action(&self) -> usize {
        self.schedule.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub total_reward: f64,
    pub success: bool,
    pub steps_taken: usize,
    pub actions: Vec<Vec<f64>>,
    pub collided: bool,
    /// Set when the policy failed (error or non-finite action) and the episode was cut short.
    pub aborted: Option<String>,
}

/// RNG for the environment (start state, hints) of rollout `seed`.
fn env_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for the policy's own sampling in rollout `seed`.
fn policy_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Runs one closed-loop episode, replanning at every control step.
///
/// Start states depend only on `seed`, so different policies evaluated with
/// the same seed face the same episode.
pub fn rollout<P: Policy + ?Sized>(
    spec: &TaskSpec,
    policy: &mut P,
    seed: u64,
) -> Result<RolloutResult> {
    spec.validate()?;
    let mut erng = env_rng(seed);
    let mut prng = policy_rng(seed);
    let mut env = Env::reset(spec, &mut erng);
    policy.reset(&mut prng);
    let mut res = RolloutResult {
        total_reward: 0.0,
        success: false,
        steps_taken: 0,
        actions: Vec::new(),
        collided: false,
        aborted: None,
    };
    while !env.is_done() {
        let obs = env.obs();
        let action = match policy.act(&env, &obs, &mut prng) {
            Ok(a) if a.len() != spec.action_dim => {
                return Err(Error::invalid(format!(
                    "policy returned {} action components, task expects {}",
                    a.len(),
                    spec.action_dim
                )))
            }
            Ok(a) if a.iter().all(|x| x.is_finite()) => a,
            Ok(_) => {
                res.aborted = Some(format!("non-finite action at step {}", res.steps_taken));
                break;
            }
            Err(e) => {
                res.aborted = Some(format!("policy error at step {}: {e}", res.steps_taken));
                break;
            }
        };
        let out = env.step(&action, &mut erng);
        res.actions.push(action);
        res.total_reward += out.reward;
        res.steps_taken += 1;
        res.success = out.success;
        res.collided = out.collided;
    }
    Ok(res)
}

/// Records `n_episodes` expert demonstrations. Fails if any episode does not
/// reach the success predicate.
pub fn generate_dataset(spec: &TaskSpec, n_episodes: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n_episodes == 0 {
        return Err(Error::invalid("n_episodes must be >= 1"));
    }
    let mut ds = Dataset::new(
        Provenance {
            task: spec.clone(),
            n_episodes,
            seed,
        },
        spec.obs_dim,
        spec.action_dim,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ep in 0..n_episodes {
        let mut env = Env::reset(spec, &mut rng);
        let mut expert = Expert::new(&env, &mut rng);
        let mut step = 0u32;
        let mut success = false;
        while !env.is_done() {
            let obs = env.obs();
            let action = expert.act(&env, &mut rng);
            ds.push(ep as u32, step, &obs, &action)?;
            success = env.step(&action, &mut rng).success;
            step += 1;
        }
        if !success {
            return Err(Error::Domain(format!(
                "expert failed {} episode {ep} (seed {seed})",
                spec.name()
            )));
        }
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub schedule: SolverSchedule,
    pub mean_reward: f64,
    pub success_rate: f64,
    pub mean_eval_ms: f64,
    pub field_evals_per_action: usize,
    pub n_rollouts: usize,
    pub n_aborted: usize,
}

/// Aggregates `n_rollouts` rollouts with seeds `seed, seed + 1, ...`.
pub fn evaluate_policy<P: Policy + ?Sized>(
    spec: &TaskSpec,
    policy: &mut P,
    n_rollouts: usize,
    seed: u64,
) -> Result<(f64, f64, f64, usize)> {
    if n_rollouts == 0 {
        return Err(Error::invalid("n_rollouts must be >= 1"));
    }
    let (mut reward, mut successes, mut aborted) = (0.0, 0usize, 0usize);
    let (mut actions, mut elapsed) = (0usize, 0.0f64);
    for i in 0..n_rollouts {
        let start = Instant::now();
        let r = rollout(spec, policy, seed.wrapping_add(i as u64))?;
        elapsed += start.elapsed().as_secs_f64() * 1e3;
        reward += r.total_reward;
        successes += usize::from(r.success);
        aborted += usize::from(r.aborted.is_some());
        actions += r.steps_taken.max(1);
    }
    let n = n_rollouts as f64;
    Ok((
        reward / n,
        successes as f64 / n,
        elapsed / actions as f64,
        aborted,
    ))
}

/// One row per schedule: mean reward, success rate and wall time per action.
pub fn evaluate(
    spec: &TaskSpec,
    checkpoint: &Checkpoint,
    schedules: &[SolverSchedule],
    n_rollouts: usize,
    seed: u64,
) -> Result<Vec<EvalRow>> {
    if checkpoint.model.action_dim() != spec.action_dim
        || checkpoint.model.obs_dim() != spec.obs_dim
    {
        return Err(Error::invalid(format!(
            "checkpoint dims (obs {}, action {}) do not match task {} (obs {}, action {})",
            checkpoint.model.obs_dim(),
            checkpoint.model.action_dim(),
            spec.name(),
            spec.obs_dim,
            spec.action_dim
        )));
    }
    schedules
        .iter()
        .map(|sched| {
            let mut policy = FlowPolicy::new(checkpoint, *sched);
            let (mean_reward, success_rate, mean_eval_ms, n_aborted) =
                evaluate_policy(spec, &mut policy, n_rollouts, seed)?;
            Ok(EvalRow {
                schedule: *sched,
                mean_reward,
                success_rate,
                mean_eval_ms,
                field_evals_per_action: sched.steps,
                n_rollouts,
                n_aborted,
            })
        })
        .collect()
}

fn fmt_t_jump(s: &SolverSchedule) -> String {
    s.t_jump.map_or(String::new(), |t| t.to_string())
}

/// The full evaluation table, including wall-clock timing.
pub fn eval_table_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("schedule_kind,N,t_jump,mean_reward,success_rate,mean_eval_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.schedule.kind,
            r.schedule.steps,
            fmt_t_jump(&r.schedule),
            r.mean_reward,
            r.success_rate,
            r.mean_eval_ms
        );
    }
    out
}

/// The deterministic part of the evaluation table (no timing column), which
/// is byte-identical across repeated runs.
pub fn sweep_csv(rows: &[EvalRow]) -> String {
    let mut out =
        String::from("schedule_kind,N,t_jump,mean_reward,success_rate,field_evals,n_aborted\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.schedule.kind,
            r.schedule.steps,
            fmt_t_jump(&r.schedule),
            r.mean_reward,
            r.success_rate,
            r.field_evals_per_action,
            r.n_aborted
        );
    }
    out
}

/// Wall-clock timing per schedule.
pub fn timing_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("schedule_kind,N,t_jump,mean_eval_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.schedule.kind,
            r.schedule.steps,
            fmt_t_jump(&r.schedule),
            r.mean_eval_ms
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_policy_never_reaches_goal() {
        let spec = TaskSpec::two_mode_reach();
        let mut p = FnPolicy(|_o: &[f64]| vec![0.0, 0.0]);
        let r = rollout(&spec, &mut p, 4).unwrap();
        assert!(!r.success);
        assert_eq!(r.steps_taken, spec.horizon);
    }

    #[test]
    fn nan_policy_aborts() {
        let spec = TaskSpec::two_mode_reach();
        let mut p = FnPolicy(|_o: &[f64]| vec![f64::NAN, 0.0]);
        let r = rollout(&spec, &mut p, 0).unwrap();
        assert!(!r.success);
        assert!(r.aborted.unwrap().contains("non-finite"));
        assert_eq!(r.steps_taken, 0);
    }

    #[test]
    fn wrong_action_width_is_an_error() {
        let spec = TaskSpec::two_mode_reach();
        let mut p = FnPolicy(|_o: &[f64]| vec![0.0]);
        assert!(rollout(&spec, &mut p, 0).is_err());
    }

    #[test]
    fn dataset_is_deterministic_and_successful() {
        let spec = TaskSpec::two_mode_reach();
        let a = generate_dataset(&spec, 10, 3).unwrap();
        let b = generate_dataset(&spec, 10, 3).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(a.n_episodes(), 10);
        assert!(generate_dataset(&spec, 0, 3).is_err());
    }

    #[test]
    fn csv_headers() {
        assert!(eval_table_csv(&[])
            .starts_with("schedule_kind,N,t_jump,mean_reward,success_rate,mean_eval_ms\n"));
        assert!(sweep_csv(&[]).starts_with("schedule_kind,N,t_jump,"));
        assert!(timing_csv(&[]).ends_with("mean_eval_ms\n"));
    }
}
