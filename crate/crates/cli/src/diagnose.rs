use std::path::{Path, PathBuf};

use flowdj::dataset::Dataset;
use flowdj::diagnostics::{
    build_knn_index, curvature_csv, curvature_probe, default_probe_pairs, drift_curves,
    linear_grid, lipschitz_csv, lipschitz_probe, truncation_csv, truncation_probe, DriftConfig,
};
use flowdj::io::sha256_file;
use flowdj::solver::{AnalyticField, SolverSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::output::{input_tag, resolve_out_dir, RunDir};
use crate::sweep::load_checkpoint;

pub const DRIFT_FILE: &str = "drift.csv";
pub const LIPSCHITZ_FILE: &str = "lipschitz.csv";
pub const CURVATURE_FILE: &str = "curvature.csv";
pub const TRUNCATION_FILE: &str = "truncation.csv";

/// Times probed in analytic mode.
pub const ANALYTIC_TIMES: [f64; 4] = [0.5, 0.9, 0.99, 0.999];
const CURVATURE_H: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseArgs {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub analytic: bool,
    pub t_grid: Vec<f64>,
    pub seed: u64,
    pub draws_per_row: usize,
    /// Overrides the validation fraction stored in the checkpoint.
    pub heldout_fraction: Option<f64>,
}

impl DiagnoseArgs {
    pub fn default_grid() -> Vec<f64> {
        linear_grid(0.05, 0.95, 20)
    }
}

/// Parses `lo,hi,n` into `n` equally spaced points.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::usage(format!("--t-grid expects lo,hi,n; got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo > 0.0 && hi < 1.0 && lo <= hi) {
        return Err(CliError::usage(
            "--t-grid needs 0 < lo <= hi < 1 and n >= 1",
        ));
    }
    Ok(linear_grid(lo, hi, n))
}

pub fn cmd_diagnose(args: &DiagnoseArgs, out: Option<&Path>) -> CliResult<PathBuf> {
    if args.analytic {
        return diagnose_analytic(args, out);
    }
    let ckpt_path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::usage("--ckpt is required unless --analytic is given"))?;
    let data_path = args
        .data
        .as_ref()
        .ok_or_else(|| CliError::usage("--data is required unless --analytic is given"))?;
    if args.t_grid.is_empty() || args.t_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(CliError::usage(
            "t grid must be non-empty and inside (0, 1)",
        ));
    }
    let (ckpt, ckpt_digest) = load_checkpoint(ckpt_path)?;
    let dataset = Dataset::load(data_path).map_err(|e| CliError::from(e).context("--data"))?;
    let fraction = match args.heldout_fraction {
        Some(f) => f,
        None => ckpt
            .config
            .get("train")
            .and_then(|t| t.get("validation_fraction"))
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0),
    };
    let (train, heldout) = dataset.split_by_episode(fraction)?;
    if heldout.is_empty() {
        return Err(CliError::usage(
            "held-out split is empty: the checkpoint was trained without validation episodes; pass --heldout-fraction",
        ));
    }
    if train.table().action_dim() != ckpt.model.action_dim()
        || train.table().obs_dim() != ckpt.model.obs_dim()
    {
        return Err(CliError::usage("dataset dims do not match the checkpoint"));
    }

    let train_t = ckpt.norm.normalise_table(train.table());
    let heldout_t = ckpt.norm.normalise_table(heldout.table());
    let index = build_knn_index(train_t.actions(), train_t.action_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut dcfg = DriftConfig::new(args.t_grid.clone());
    dcfg.draws_per_row = args.draws_per_row;
    let drift = drift_curves(&ckpt.model, &heldout_t, &index, &dcfg, &mut rng)?;

    // field probes at the first held-out observation
    let o = heldout_t.obs(0).to_vec();
    let pairs = default_probe_pairs(ckpt.model.action_dim(), args.seed);
    let lips = lipschitz_probe(&ckpt.model, &args.t_grid, &pairs, &o)?;
    let a = heldout_t.action(0).to_vec();
    let curv = args
        .t_grid
        .iter()
        .filter(|&&t| t - CURVATURE_H >= 0.0 && t + CURVATURE_H < 1.0)
        .map(|&t| curvature_probe(&ckpt.model, &a, t, CURVATURE_H, &o))
        .collect::<Result<Vec<_>, _>>()?;

    let echo = serde_json::json!({
        "checkpoint": ckpt_path,
        "checkpoint_sha256": ckpt_digest,
        "data": data_path,
        "data_sha256": sha256_file(data_path)?,
        "heldout_fraction": fraction,
        "heldout_rows": heldout.len(),
        "t_grid": args.t_grid,
        "draws_per_row": args.draws_per_row,
        "curvature_h": CURVATURE_H,
        "seed": args.seed,
    });
    let tag = input_tag(&[echo.to_string().as_bytes()]);
    let mut run = RunDir::create(resolve_out_dir(out, &format!("diagnose-{tag}")), "diagnose")?;
    run.write(DRIFT_FILE, drift.to_csv().as_bytes())?;
    run.write(LIPSCHITZ_FILE, lipschitz_csv(&lips).as_bytes())?;
    run.write(CURVATURE_FILE, curvature_csv(&curv).as_bytes())?;
    run.finish(echo, vec![args.seed])
}

/// Probes closed-form fields whose answers are known: the collapse-to-zero
/// marginal field for Lipschitz growth, and `v = t` for the jump error.
fn diagnose_analytic(args: &DiagnoseArgs, out: Option<&Path>) -> CliResult<PathBuf> {
    let field = AnalyticField::MarginalToZero;
    let pairs = default_probe_pairs(2, args.seed);
    let lips = lipschitz_probe(&field, &ANALYTIC_TIMES, &pairs, &[])?;
    let curv = ANALYTIC_TIMES
        .iter()
        .map(|&t| curvature_probe(&field, &[1.0, -0.5], t, CURVATURE_H * (1.0 - t), &[]))
        .collect::<Result<Vec<_>, _>>()?;
    let ramp = AnalyticField::TimePoly(vec![0.0, 1.0]);
    let mut scheds = Vec::new();
    for n in [1, 2, 4, 16, 64] {
        scheds.push(SolverSchedule::uniform(n)?);
        scheds.push(SolverSchedule::dense_jump(n, 0.5)?);
    }
    let trunc = truncation_probe(&ramp, &[0.0], &scheds)?;

    let echo = serde_json::json!({
        "analytic": true,
        "lipschitz_field": field,
        "truncation_field": ramp,
        "t_list": ANALYTIC_TIMES,
        "seed": args.seed,
    });
    let tag = input_tag(&[echo.to_string().as_bytes()]);
    let mut run = RunDir::create(
        resolve_out_dir(out, &format!("diagnose-analytic-{tag}")),
        "diagnose",
    )?;
    run.write(LIPSCHITZ_FILE, lipschitz_csv(&lips).as_bytes())?;
    run.write(CURVATURE_FILE, curvature_csv(&curv).as_bytes())?;
    run.write(TRUNCATION_FILE, truncation_csv(&trunc).as_bytes())?;
    run.finish(echo, vec![args.seed])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.1,0.9,5").unwrap().len(), 5);
        assert!(parse_grid("0,0.9,5").is_err());
        assert!(parse_grid("0.1,0.9").is_err());
        assert_eq!(DiagnoseArgs::default_grid().len(), 20);
    }
}
