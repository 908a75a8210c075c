//! Numerical probes of a velocity field: local Lipschitz ratios, the
//! terminal-jump curvature `dv/dt + (grad_a v) v`, and global truncation
//! error of solver schedules against closed-form flows.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::solver::{integrate, AnalyticField, SolverKind, SolverSchedule, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub t: f64,
    /// Largest `|v(x,t) - v(y,t)| / |x - y|` over the probe pairs.
    pub l_hat: f64,
    pub n_pairs: usize,
}

pub type ProbePair = (Vec<f64>, Vec<f64>);

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&z);
        if n > 1e-12 {
            return z.into_iter().map(|x| x / n).collect();
        }
    }
}

/// 64 pairs around the origin, cycling through radii 0.01, 0.1 and 1.
///
/// Each pair is `x = r u`, `y = x + r w` for random unit vectors `u`, `w`.
pub fn default_probe_pairs(dim: usize, seed: u64) -> Vec<ProbePair> {
    const RADII: [f64; 3] = [0.01, 0.1, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..64)
        .map(|i| {
            let r = RADII[i % RADII.len()];
            let x: Vec<f64> = random_unit(dim, &mut rng).iter().map(|u| r * u).collect();
            let y = x
                .iter()
                .zip(random_unit(dim, &mut rng))
                .map(|(a, w)| a + r * w)
                .collect();
            (x, y)
        })
        .collect()
}

/// Lower bound on the local Lipschitz constant in `a` at each time in `t_list`.
pub fn lipschitz_probe<F: VelocityField + ?Sized>(
    field: &F,
    t_list: &[f64],
    pairs: &[ProbePair],
    o: &[f64],
) -> Result<Vec<LipschitzEstimate>> {
    if pairs.is_empty() {
        return Err(Error::invalid("need at least one probe pair"));
    }
    for (i, (x, y)) in pairs.iter().enumerate() {
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "pair {i} has mismatched dimensions"
            )));
        }
        if x == y {
            return Err(Error::invalid(format!("pair {i} has x = y")));
        }
    }
    t_list
        .iter()
        .map(|&t| {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::Domain(format!("t = {t} is outside [0, 1)")));
            }
            let mut l_hat = 0.0f64;
            for (x, y) in pairs {
                let vx = field.velocity(x, t, o)?;
                let vy = field.velocity(y, t, o)?;
                let dv: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a - b).collect();
                let dx: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                l_hat = l_hat.max(norm(&dv) / norm(&dx));
            }
            Ok(LipschitzEstimate {
                t,
                l_hat,
                n_pairs: pairs.len(),
            })
        })
        .collect()
}

pub fn lipschitz_csv(rows: &[LipschitzEstimate]) -> String {
    let mut out = String::from("t,l_hat,n_pairs\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.t, r.l_hat, r.n_pairs);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEstimate {
    pub t: f64,
    pub a: Vec<f64>,
    /// Estimate of `dv/dt + (grad_a v) v` at `(a, t)`.
    pub kappa: Vec<f64>,
    pub h: f64,
}

impl CurvatureEstimate {
    pub fn kappa_norm(&self) -> f64 {
        norm(&self.kappa)
    }
}

/// Central-difference estimate of the curvature term.
///
/// `dv/dt` uses `(v(a, t+h) - v(a, t-h)) / 2h`; the Jacobian-vector product
/// uses the directional difference `(v(a + h v, t) - v(a - h v, t)) / 2h`
/// along `v = v(a, t)`.
pub fn curvature_probe<F: VelocityField + ?Sized>(
    field: &F,
    a: &[f64],
    t: f64,
    h: f64,
    o: &[f64],
) -> Result<CurvatureEstimate> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("h must be > 0, got {h}")));
    }
    if t - h < 0.0 || t + h >= 1.0 {
        return Err(Error::Domain(format!(
            "stencil [{}, {}] leaves [0, 1)",
            t - h,
            t + h
        )));
    }
    let v = field.velocity(a, t, o)?;
    let v_plus_t = field.velocity(a, t + h, o)?;
    let v_minus_t = field.velocity(a, t - h, o)?;
    let a_plus: Vec<f64> = a.iter().zip(&v).map(|(x, vx)| x + h * vx).collect();
    let a_minus: Vec<f64> = a.iter().zip(&v).map(|(x, vx)| x - h * vx).collect();
    let v_plus_a = field.velocity(&a_plus, t, o)?;
    let v_minus_a = field.velocity(&a_minus, t, o)?;
    let kappa = (0..v.len())
        .map(|i| {
            (v_plus_t[i] - v_minus_t[i]) / (2.0 * h) + (v_plus_a[i] - v_minus_a[i]) / (2.0 * h)
        })
        .collect();
    Ok(CurvatureEstimate {
        t,
        a: a.to_vec(),
        kappa,
        h,
    })
}

pub fn curvature_csv(rows: &[CurvatureEstimate]) -> String {
    let mut out = String::from("t,h,kappa_norm,a,kappa\n");
    for r in rows {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t,
            r.h,
            r.kappa_norm(),
            join(&r.a),
            join(&r.kappa)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub schedule: SolverSchedule,
    /// `|numerical a(1) - exact a(1)|`.
    pub global_error: f64,
    /// For dense-jump schedules with `N >= 2`: `|numerical a(t_jump) - exact a(t_jump)|`.
    pub dense_phase_error: Option<f64>,
}

/// Global error of each schedule against the field's exact flow from `a0`.
pub fn truncation_probe(
    field: &AnalyticField,
    a0: &[f64],
    schedules: &[SolverSchedule],
) -> Result<Vec<TruncationRow>> {
    let exact_end = field.exact_flow(a0, 1.0);
    schedules
        .iter()
        .map(|sched| {
            let tr = integrate(field, a0, &[], sched)?;
            let diff: Vec<f64> = tr
                .final_state()
                .iter()
                .zip(&exact_end)
                .map(|(x, y)| x - y)
                .collect();
            let dense_phase_error = match (sched.kind, sched.t_jump) {
                (SolverKind::DenseJump, Some(tj)) if sched.steps >= 2 => {
                    let exact = field.exact_flow(a0, tj);
                    let at_jump = &tr.states[sched.steps - 1];
                    let d: Vec<f64> = at_jump.iter().zip(&exact).map(|(x, y)| x - y).collect();
                    Some(norm(&d))
                }
                _ => None,
            };
            Ok(TruncationRow {
                schedule: *sched,
                global_error: norm(&diff),
                dense_phase_error,
            })
        })
        .collect()
}

pub fn truncation_csv(rows: &[TruncationRow]) -> String {
    let mut out = String::from("schedule_kind,N,t_jump,global_error,dense_phase_error\n");
    for r in rows {
        let tj = r.schedule.t_jump.map_or(String::new(), |t| t.to_string());
        let dp = r.dense_phase_error.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.schedule.kind, r.schedule.steps, tj, r.global_error, dp
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::FnField;

    #[test]
    fn marginal_field_lipschitz_is_one_over_one_minus_t() {
        let pairs = default_probe_pairs(3, 1);
        let est =
            lipschitz_probe(&AnalyticField::MarginalToZero, &[0.5, 0.99], &pairs, &[]).unwrap();
        assert!((est[0].l_hat - 2.0).abs() < 1e-9);
        assert!((est[1].l_hat - 100.0).abs() / 100.0 < 1e-9);
        assert_eq!(est[0].n_pairs, 64);
    }

    #[test]
    fn constant_field_is_zero_lipschitz() {
        let pairs = default_probe_pairs(2, 1);
        let est = lipschitz_probe(
            &AnalyticField::Constant(vec![1.0, 2.0]),
            &[0.1, 0.7],
            &pairs,
            &[],
        )
        .unwrap();
        assert!(est.iter().all(|e| e.l_hat == 0.0));
    }

    #[test]
    fn lipschitz_errors() {
        let pairs = vec![(vec![1.0], vec![1.0])];
        assert!(lipschitz_probe(&AnalyticField::MarginalToZero, &[0.5], &pairs, &[]).is_err());
        let pairs = default_probe_pairs(1, 0);
        assert!(lipschitz_probe(&AnalyticField::MarginalToZero, &[1.0], &pairs, &[]).is_err());
    }

    #[test]
    fn probe_pairs_are_distinct_and_deterministic() {
        let a = default_probe_pairs(4, 9);
        assert_eq!(a, default_probe_pairs(4, 9));
        assert!(a.iter().all(|(x, y)| x != y));
        assert!((norm(&a[0].0) - 0.01).abs() < 1e-15);
        assert!((norm(&a[2].0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curvature_of_simple_fields() {
        let k = curvature_probe(
            &AnalyticField::TimePoly(vec![0.0, 1.0]),
            &[0.4],
            0.5,
            1e-4,
            &[],
        )
        .unwrap();
        assert!((k.kappa[0] - 1.0).abs() < 1e-6);
        let k =
            curvature_probe(&AnalyticField::Constant(vec![2.0]), &[0.4], 0.5, 1e-4, &[]).unwrap();
        assert!(k.kappa[0].abs() < 1e-8);
        let k = curvature_probe(
            &AnalyticField::ScaledState(vec![1.0]),
            &[3.0],
            0.5,
            1e-4,
            &[],
        )
        .unwrap();
        assert!((k.kappa[0] - 3.0).abs() < 1e-5);
    }

    #[test]
    fn curvature_domain() {
        let f = AnalyticField::TimePoly(vec![0.0, 1.0]);
        assert!(matches!(
            curvature_probe(&f, &[0.0], 0.99995, 1e-4, &[]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            curvature_probe(&f, &[0.0], 0.00005, 1e-4, &[]),
            Err(Error::Domain(_))
        ));
        assert!(curvature_probe(&f, &[0.0], 0.5, 0.0, &[]).is_err());
    }

    #[test]
    fn curvature_converges_quadratically_in_h() {
        // v = sin(3t) a: kappa = 3 cos(3t) a + sin(3t)^2 a, smooth in both arguments.
        let f = FnField(|a: &[f64], t: f64, _o: &[f64]| vec![(3.0 * t).sin() * a[0]]);
        let (a, t) = (0.8f64, 0.4f64);
        let exact = 3.0 * (3.0 * t).cos() * a + (3.0 * t).sin().powi(2) * a;
        let err = |h| (curvature_probe(&f, &[a], t, h, &[]).unwrap().kappa[0] - exact).abs();
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn truncation_of_time_field() {
        let f = AnalyticField::TimePoly(vec![0.0, 1.0]);
        let scheds: Vec<_> = [2, 16, 256]
            .iter()
            .map(|&n| SolverSchedule::dense_jump(n, 0.5).unwrap())
            .collect();
        let rows = truncation_probe(&f, &[0.0], &scheds).unwrap();
        for r in &rows {
            let jump = r.global_error - r.dense_phase_error.unwrap();
            assert!((jump - 0.125).abs() < 1e-9, "{jump}");
        }
        assert!((rows[0].global_error - 0.25).abs() < 1e-15);
        assert!(rows[2].global_error < rows[1].global_error);
        let csv = truncation_csv(&rows);
        assert!(csv.starts_with("schedule_kind,N,t_jump,global_error,dense_phase_error\n"));
    }
}
