use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flowdj::solver::SolverKind;
use flowdj::train::TimeSchedule;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::output::{input_tag, load_verified, resolve_out_dir, RunDir};
use crate::sweep::SWEEP_FILE;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUCCESS_TABLE_FILE: &str = "success_table.csv";

/// Ablation cells: training-time law crossed with the integration schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    VanillaFm,
    FmBeta,
    FmDj,
    FmDjBeta,
}

impl Method {
    pub fn infer(time: &TimeSchedule, solver: SolverKind) -> Self {
        match (time.is_uniform(), solver) {
            (true, SolverKind::UniformEuler) => Method::VanillaFm,
            (false, SolverKind::UniformEuler) => Method::FmBeta,
            (true, SolverKind::DenseJump) => Method::FmDj,
            (false, SolverKind::DenseJump) => Method::FmDjBeta,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::VanillaFm => "Vanilla FM",
            Method::FmBeta => "FM-β",
            Method::FmDj => "FM-DJ",
            Method::FmDjBeta => "FM-DJβ",
        }
    }
}

#[derive(Debug, Deserialize)]
struct SweepRow {
    schedule_kind: SolverKind,
    #[serde(rename = "N")]
    n: usize,
    mean_reward: f64,
    success_rate: f64,
}

#[derive(Debug, Default, Clone)]
struct Cell {
    runs: usize,
    reward: f64,
    success: f64,
}

type Key = (String, Method, usize);

fn read_run(dir: &Path, cells: &mut BTreeMap<Key, Cell>) -> CliResult<bool> {
    let manifest = load_verified(dir)?;
    if manifest.command != "sweep" {
        return Ok(false);
    }
    let ctx = |what: &str| CliError::usage(format!("{}: manifest {what}", dir.display()));
    let time: TimeSchedule = manifest
        .config
        .get("time_schedule")
        .cloned()
        .and_then(|v| serde_json::from_value(v).ok())
        .ok_or_else(|| ctx("does not record the training time schedule"))?;
    let task = manifest
        .config
        .get("task")
        .and_then(|t| t.get("kind"))
        .and_then(|k| k.get("name"))
        .and_then(|n| n.as_str())
        .ok_or_else(|| ctx("does not record the task"))?
        .to_string();
    let mut reader = csv::Reader::from_path(dir.join(SWEEP_FILE))
        .map_err(|e| CliError::usage(format!("{}: {e}", dir.join(SWEEP_FILE).display())))?;
    for row in reader.deserialize::<SweepRow>() {
        let row =
            row.map_err(|e| CliError::usage(format!("{}: {e}", dir.join(SWEEP_FILE).display())))?;
        let cell = cells
            .entry((task.clone(), Method::infer(&time, row.schedule_kind), row.n))
            .or_default();
        cell.runs += 1;
        cell.reward += row.mean_reward;
        cell.success += row.success_rate;
    }
    Ok(true)
}

/// Long-form summary, one row per (task, method, N), averaged over runs.
fn summary_csv(cells: &BTreeMap<Key, Cell>) -> String {
    let mut out = String::from("task,method,N,n_runs,mean_reward,success_rate\n");
    for ((task, method, n), c) in cells {
        let k = c.runs as f64;
        let _ = writeln!(
            out,
            "{task},{},{n},{},{},{}",
            method.label(),
            c.runs,
            c.reward / k,
            c.success / k
        );
    }
    out
}

/// Success rate pivoted to method rows and step-budget columns.
fn success_table(cells: &BTreeMap<Key, Cell>) -> String {
    let mut budgets: Vec<usize> = cells.keys().map(|k| k.2).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mut out = String::from("task,method");
    for n in &budgets {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    let mut rows: Vec<(&String, Method)> = cells.keys().map(|k| (&k.0, k.1)).collect();
    rows.dedup();
    for (task, method) in rows {
        let _ = write!(out, "{task},{}", method.label());
        for &n in &budgets {
            match cells.get(&(task.clone(), method, n)) {
                Some(c) => {
                    let _ = write!(out, ",{}", c.success / c.runs as f64);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Collates sweep runs into ablation-grid summaries. Non-sweep runs are
/// verified but otherwise ignored.
pub fn cmd_report(dirs: &[PathBuf], out: Option<&Path>) -> CliResult<PathBuf> {
    if dirs.is_empty() {
        return Err(CliError::usage("report needs at least one run directory"));
    }
    let mut cells = BTreeMap::new();
    let mut used = Vec::new();
    for d in dirs {
        if read_run(d, &mut cells)? {
            used.push(d.clone());
        }
    }
    if used.is_empty() {
        return Err(CliError::usage(
            "none of the given directories is a sweep run",
        ));
    }
    let table = success_table(&cells);
    print!("{table}");
    let names: Vec<String> = dirs.iter().map(|d| d.display().to_string()).collect();
    let tag = input_tag(&[names.join("\n").as_bytes()]);
    let mut run = RunDir::create(resolve_out_dir(out, &format!("report-{tag}")), "report")?;
    run.write(SUMMARY_FILE, summary_csv(&cells).as_bytes())?;
    run.write(SUCCESS_TABLE_FILE, table.as_bytes())?;
    run.finish(serde_json::json!({ "runs": used }), Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_grid() {
        let beta = TimeSchedule::Beta { alpha: 0.2 };
        assert_eq!(
            Method::infer(&TimeSchedule::Uniform, SolverKind::UniformEuler),
            Method::VanillaFm
        );
        assert_eq!(
            Method::infer(&beta, SolverKind::UniformEuler),
            Method::FmBeta
        );
        assert_eq!(
            Method::infer(&TimeSchedule::Uniform, SolverKind::DenseJump),
            Method::FmDj
        );
        assert_eq!(
            Method::infer(&beta, SolverKind::DenseJump),
            Method::FmDjBeta
        );
        // Beta(1, 1) is the uniform law
        assert_eq!(
            Method::infer(&TimeSchedule::Beta { alpha: 1.0 }, SolverKind::DenseJump),
            Method::FmDj
        );
    }
}
