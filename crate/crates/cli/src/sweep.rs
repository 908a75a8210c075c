use std::fs;
use std::path::{Path, PathBuf};

use flowdj::bench::{evaluate, sweep_csv, timing_csv, TaskSpec};
use flowdj::io::sha256_hex;
use flowdj::model::Checkpoint;
use flowdj::solver::{build_schedule, SolverKind, SolverSchedule};
use flowdj::train::TimeSchedule;

use crate::error::{CliError, CliResult};
use crate::output::{input_tag, resolve_out_dir, RunDir};
use crate::train::parse_task;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const TIMING_FILE: &str = "timing.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArgs {
    pub checkpoint: PathBuf,
    /// Preset name or path to a JSON task file.
    pub task: String,
    pub steps: Vec<usize>,
    pub solvers: Vec<SolverKind>,
    pub t_jump: f64,
    pub rollouts: usize,
    pub seed: u64,
}

pub fn load_checkpoint(path: &Path) -> CliResult<(Checkpoint, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let ckpt =
        Checkpoint::from_text(&text).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((ckpt, sha256_hex(text.as_bytes())))
}

/// The training-time schedule recorded in a checkpoint, if any.
pub fn checkpoint_time_schedule(ckpt: &Checkpoint) -> Option<TimeSchedule> {
    serde_json::from_value(ckpt.config.get("train")?.get("time_schedule")?.clone()).ok()
}

fn resolve_task(arg: &str) -> CliResult<TaskSpec> {
    if TaskSpec::preset(arg).is_ok() {
        return parse_task(&serde_json::Value::String(arg.to_string()));
    }
    let path = Path::new(arg);
    let text = fs::read_to_string(path).map_err(|_| {
        CliError::usage(format!(
            "task `{arg}` is neither a preset nor a readable JSON file"
        ))
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{arg}: {e}")))?;
    parse_task(&value)
}

/// Cross product of solver kinds and step budgets, in that nesting order.
pub fn schedules(args: &SweepArgs) -> CliResult<Vec<SolverSchedule>> {
    if args.steps.is_empty() {
        return Err(CliError::usage("--steps must list at least one budget"));
    }
    if args.solvers.is_empty() {
        return Err(CliError::usage("--solver must list at least one kind"));
    }
    let mut out = Vec::new();
    for &kind in &args.solvers {
        for &n in &args.steps {
            let tj = (kind == SolverKind::DenseJump).then_some(args.t_jump);
            out.push(
                build_schedule(kind, n, tj)
                    .map_err(|e| CliError::from(e).context("--t-jump/--steps"))?,
            );
        }
    }
    Ok(out)
}

/// Evaluates a checkpoint under every requested schedule. Writes the
/// deterministic `sweep.csv`, wall-clock `timing.csv` and a manifest.
pub fn cmd_sweep(args: &SweepArgs, out: Option<&Path>) -> CliResult<PathBuf> {
    if args.rollouts == 0 {
        return Err(CliError::usage("--rollouts must be >= 1"));
    }
    let scheds = schedules(args)?;
    let (ckpt, digest) = load_checkpoint(&args.checkpoint)?;
    let spec = resolve_task(&args.task)?;
    let rows = evaluate(&spec, &ckpt, &scheds, args.rollouts, args.seed)?;

    let echo = serde_json::json!({
        "checkpoint": args.checkpoint,
        "checkpoint_sha256": digest,
        "time_schedule": checkpoint_time_schedule(&ckpt),
        "task": spec,
        "steps": args.steps,
        "solvers": args.solvers,
        "t_jump": args.t_jump,
        "rollouts": args.rollouts,
        "seed": args.seed,
    });
    let tag = input_tag(&[digest.as_bytes(), echo.to_string().as_bytes()]);
    let mut run = RunDir::create(resolve_out_dir(out, &format!("sweep-{tag}")), "sweep")?;
    run.write(SWEEP_FILE, sweep_csv(&rows).as_bytes())?;
    run.write(TIMING_FILE, timing_csv(&rows).as_bytes())?;
    run.finish(echo, vec![args.seed])
}
