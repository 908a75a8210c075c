use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Table;
use crate::error::{Error, Result};
use crate::model::VelocityModel;

use super::knn::KnnIndex;

/// How the state `a_t` is produced at each grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePath {
    /// `a_t = (1 - t) a0 + t a1` using the held-out expert action.
    ExactInterpolant,
    /// Euler-integrate the learned field from `a0` over `[0, t]` in this many steps.
    Integrated { steps: usize },
}

/// Which action is looked up in the KNN index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnQuery {
    /// The action implied by jumping straight to `t = 1`: `a_t + (1 - t) v`.
    OneJump,
    /// The raw state `a_t`.
    RawState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftConfig {
    pub t_grid: Vec<f64>,
    /// Noise draws per held-out row.
    pub draws_per_row: usize,
    pub path: StatePath,
    pub query: KnnQuery,
}

impl DriftConfig {
    pub fn new(t_grid: Vec<f64>) -> Self {
        Self {
            t_grid,
            draws_per_row: 4,
            path: StatePath::ExactInterpolant,
            query: KnnQuery::OneJump,
        }
    }
}

/// `n` equally spaced times from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub t_grid: Vec<f64>,
    /// Mean `cos(v_hat, a1 - a0)` per grid time.
    pub cos_true: Vec<f64>,
    /// Mean `cos(v_hat, a_knn - a0)` per grid time.
    pub cos_knn: Vec<f64>,
    pub n_samples: Vec<usize>,
    pub n_skipped: Vec<usize>,
}

impl DriftReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,cos_true,cos_knn,n\n");
        for i in 0..self.t_grid.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.t_grid[i], self.cos_true[i], self.cos_knn[i], self.n_samples[i]
            );
        }
        out
    }

    /// Maximal runs `[start, end]` of consecutive grid indices, restricted to
    /// `t` in `[lo, hi]`, where `cos_knn > cos_true`.
    pub fn knn_dominant_runs(&self, lo: f64, hi: f64) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for i in 0..self.t_grid.len() {
            let t = self.t_grid[i];
            let hit = t >= lo && t <= hi && self.cos_knn[i] > self.cos_true[i];
            match (hit, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push((s, i - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.t_grid.len() - 1));
        }
        runs
    }
}

/// Cosine similarity clamped to `[-1, 1]`; `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Measures whether the learned velocity points at the true expert action
/// or at the nearest training action, as a function of `t`.
///
/// `heldout` and `index` must be in the model's (normalised) coordinates and
/// `index` must be built from a split disjoint from `heldout`.
pub fn drift_curves<R: Rng + ?Sized>(
    model: &VelocityModel,
    heldout: &Table,
    index: &KnnIndex,
    cfg: &DriftConfig,
    rng: &mut R,
) -> Result<DriftReport> {
    if heldout.is_empty() {
        return Err(Error::invalid("held-out set is empty"));
    }
    if heldout.action_dim() != model.action_dim() || heldout.obs_dim() != model.obs_dim() {
        return Err(Error::invalid("held-out dims do not match the model"));
    }
    if index.dim() != model.action_dim() {
        return Err(Error::invalid("KNN index dim does not match the model"));
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::invalid("t_grid must be non-empty and inside (0, 1)"));
    }
    if cfg.draws_per_row == 0 {
        return Err(Error::invalid("draws_per_row must be >= 1"));
    }
    if let StatePath::Integrated { steps: 0 } = cfg.path {
        return Err(Error::invalid("integrated path needs >= 1 step"));
    }

    let d = model.action_dim();
    let g = cfg.t_grid.len();
    let mut sum_true = vec![0.0; g];
    let mut sum_knn = vec![0.0; g];
    let mut n_samples = vec![0usize; g];
    let mut n_skipped = vec![0usize; g];
    let mut v_hat = vec![0.0; d];

    for row in 0..heldout.len() {
        let o = heldout.obs(row);
        let a1 = heldout.action(row);
        for _ in 0..cfg.draws_per_row {
            let a0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let v_true: Vec<f64> = a1.iter().zip(&a0).map(|(x, y)| x - y).collect();
            for (gi, &t) in cfg.t_grid.iter().enumerate() {
                let at = match cfg.path {
                    StatePath::ExactInterpolant => a0
                        .iter()
                        .zip(a1)
                        .map(|(x0, x1)| (1.0 - t) * x0 + t * x1)
                        .collect::<Vec<_>>(),
                    StatePath::Integrated { steps } => {
                        let dt = t / steps as f64;
                        let mut a = a0.clone();
                        for k in 0..steps {
                            model.eval_into(&a, k as f64 * dt, o, &mut v_hat);
                            for (x, v) in a.iter_mut().zip(&v_hat) {
                                *x += dt * v;
                            }
                        }
                        a
                    }
                };
                model.eval_into(&at, t, o, &mut v_hat);
                let query = match cfg.query {
                    KnnQuery::OneJump => at
                        .iter()
                        .zip(&v_hat)
                        .map(|(x, v)| x + (1.0 - t) * v)
                        .collect::<Vec<_>>(),
                    KnnQuery::RawState => at,
                };
                if query.iter().any(|x| !x.is_finite()) {
                    n_skipped[gi] += 1;
                    continue;
                }
                let nn = index.nearest(&query)?;
                let v_knn: Vec<f64> = index
                    .row(nn.index)
                    .iter()
                    .zip(&a0)
                    .map(|(x, y)| x - y)
                    .collect();
                match (cosine(&v_hat, &v_true), cosine(&v_hat, &v_knn)) {
                    (Some(ct), Some(ck)) => {
                        sum_true[gi] += ct;
                        sum_knn[gi] += ck;
                        n_samples[gi] += 1;
                    }
                    _ => n_skipped[gi] += 1,
                }
            }
        }
    }

    for (gi, &t) in cfg.t_grid.iter().enumerate() {
        if n_samples[gi] == 0 {
            return Err(Error::DegenerateGridPoint { t });
        }
    }
    let mean = |s: &[f64]| -> Vec<f64> {
        s.iter()
            .zip(&n_samples)
            .map(|(x, &n)| (x / n as f64).clamp(-1.0, 1.0))
            .collect()
    };
    Ok(DriftReport {
        t_grid: cfg.t_grid.clone(),
        cos_true: mean(&sum_true),
        cos_knn: mean(&sum_knn),
        n_samples,
        n_skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::build_knn_index;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_basics() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn grid() {
        let g = linear_grid(0.05, 0.95, 20);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.05);
        assert!((g[19] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_model_skips_everything() {
        let mut model = VelocityModel::init(2, 1, &[4], 0).unwrap();
        let last = model.slots().len() - 1;
        model.layer_weights_mut(last).fill(0.0);
        model.layer_bias_mut(last).fill(0.0);
        let mut heldout = Table::new(1, 2);
        heldout.push(&[0.0], &[1.0, 1.0]);
        let idx = build_knn_index(&[1.0, 1.0], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = drift_curves(
            &model,
            &heldout,
            &idx,
            &DriftConfig::new(vec![0.5]),
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateGridPoint { .. }));
    }

    #[test]
    fn rejects_grid_outside_open_interval() {
        let model = VelocityModel::init(2, 1, &[4], 0).unwrap();
        let mut heldout = Table::new(1, 2);
        heldout.push(&[0.0], &[1.0, 1.0]);
        let idx = build_knn_index(&[1.0, 1.0], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for grid in [vec![0.0], vec![1.0], vec![]] {
            assert!(
                drift_curves(&model, &heldout, &idx, &DriftConfig::new(grid), &mut rng).is_err()
            );
        }
    }

    #[test]
    fn dominant_runs() {
        let r = DriftReport {
            t_grid: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            cos_true: vec![0.9, 0.5, 0.5, 0.5, 0.5, 0.5],
            cos_knn: vec![1.0, 0.6, 0.7, 0.4, 0.6, 0.4],
            n_samples: vec![1; 6],
            n_skipped: vec![0; 6],
        };
        assert_eq!(r.knn_dominant_runs(0.5, 0.95), vec![(1, 2), (4, 4)]);
    }
}
