//! Small synthetic imitation benchmarks with scripted experts: dataset
//! generation, closed-loop rollout and success-rate evaluation.

mod rollout;
mod task;

pub use rollout::{
    eval_table_csv, evaluate, evaluate_policy, generate_dataset, rollout, sweep_csv, timing_csv,
    EvalRow, ExpertPolicy, FlowPolicy, FnPolicy, Policy, RolloutResult,
};
pub use task::{Env, Expert, Rect, StepOutcome, TaskKind, TaskSpec};
