//! Fixed-budget ODE integration of a velocity field from `t = 0` to `t = 1`.
//!
//! Two schedules share a budget of `N` field evaluations:
//!
//! * `uniform_euler`: `N` explicit Euler steps of size `1/N`.
//! * `dense_jump`: `N - 1` Euler steps of size `t_jump / (N - 1)` over
//!   `[0, t_jump]`, then one extrapolation `a += (1 - t_jump) * v(a, t_jump)`.
//!
//! With `N = 1` both reduce to the single full-span step `a0 + v(a0, 0)`.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VelocityModel;

/// Anything that can be integrated: a learned model or a closed-form field.
pub trait VelocityField {
    fn velocity(&self, a: &[f64], t: f64, o: &[f64]) -> Result<Vec<f64>>;
}

impl VelocityField for VelocityModel {
    fn velocity(&self, a: &[f64], t: f64, o: &[f64]) -> Result<Vec<f64>> {
        self.eval(a, t, o)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn velocity(&self, a: &[f64], t: f64, o: &[f64]) -> Result<Vec<f64>> {
        (**self).velocity(a, t, o)
    }
}

/// Adapts a closure `(a, t, o) -> v` into a [`VelocityField`].
pub struct FnField<F>(pub F);

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &[f64]) -> Vec<f64>,
{
    fn velocity(&self, a: &[f64], t: f64, o: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(a, t, o))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    UniformEuler,
    DenseJump,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::UniformEuler => "uniform_euler",
            SolverKind::DenseJump => "dense_jump",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_euler" | "euler" => Ok(SolverKind::UniformEuler),
            "dense_jump" | "dense-jump" | "dj" => Ok(SolverKind::DenseJump),
            other => Err(Error::invalid(format!(
                "unknown solver `{other}` (expected uniform or dense_jump)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSchedule {
    pub kind: SolverKind,
    /// Total number of field evaluations.
    pub steps: usize,
    /// Switch point; only meaningful for `dense_jump`.
    pub t_jump: Option<f64>,
}

impl SolverSchedule {
    pub fn uniform(steps: usize) -> Result<Self> {
        build_schedule(SolverKind::UniformEuler, steps, None)
    }

    pub fn dense_jump(steps: usize, t_jump: f64) -> Result<Self> {
        build_schedule(SolverKind::DenseJump, steps, Some(t_jump))
    }

    /// Step size of the Euler phase (`1` for a single full-span step).
    pub fn dt(&self) -> f64 {
        match (self.kind, self.steps) {
            (_, 1) => 1.0,
            (SolverKind::UniformEuler, n) => 1.0 / n as f64,
            (SolverKind::DenseJump, n) => self.jump_time() / (n - 1) as f64,
        }
    }

    fn jump_time(&self) -> f64 {
        self.t_jump
            .expect("dense_jump schedules with N >= 2 carry t_jump")
    }

    /// Times at which the field is evaluated, in order.
    pub fn eval_times(&self) -> Vec<f64> {
        match (self.kind, self.steps) {
            (_, 1) => vec![0.0],
            (SolverKind::UniformEuler, n) => (0..n).map(|k| k as f64 / n as f64).collect(),
            (SolverKind::DenseJump, n) => {
                let dt = self.dt();
                let mut ts: Vec<f64> = (0..n - 1).map(|k| k as f64 * dt).collect();
                ts.push(self.jump_time());
                ts
            }
        }
    }

    /// Widths of the integration intervals; they always sum to 1.
    pub fn step_widths(&self) -> Vec<f64> {
        match (self.kind, self.steps) {
            (_, 1) => vec![1.0],
            (SolverKind::UniformEuler, n) => vec![1.0 / n as f64; n],
            (SolverKind::DenseJump, n) => {
                let mut w = vec![self.dt(); n - 1];
                w.push(1.0 - self.jump_time());
                w
            }
        }
    }
}

/// Validates and builds a schedule.
pub fn build_schedule(
    kind: SolverKind,
    steps: usize,
    t_jump: Option<f64>,
) -> Result<SolverSchedule> {
    if steps == 0 {
        return Err(Error::invalid("step budget N must be >= 1"));
    }
    let t_jump = match kind {
        SolverKind::UniformEuler => None,
        SolverKind::DenseJump => match t_jump {
            Some(tj) if tj > 0.0 && tj < 1.0 => Some(tj),
            Some(tj) => {
                return Err(Error::invalid(format!(
                    "t_jump must be in (0, 1), got {tj}"
                )))
            }
            None if steps == 1 => None,
            None => return Err(Error::invalid("dense_jump with N >= 2 needs t_jump")),
        },
    };
    Ok(SolverSchedule {
        kind,
        steps,
        t_jump,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Ascending, starting at exactly 0 and ending at exactly 1.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub field_evals: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// `t,dim_0,dim_1,...` with one row per stored state.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for k in 0..dim {
            let _ = write!(out, ",dim_{k}");
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for x in s {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

/// Integrates `field` from `a0` at `t = 0` to `t = 1` under `sched`.
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    a0: &[f64],
    o: &[f64],
    sched: &SolverSchedule,
) -> Result<Trajectory> {
    let sched = build_schedule(sched.kind, sched.steps, sched.t_jump)?;
    let eval_times = sched.eval_times();
    let widths = sched.step_widths();
    let n = sched.steps;

    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut a = a0.to_vec();
    times.push(0.0);
    states.push(a.clone());
    for (k, (&t, &w)) in eval_times.iter().zip(&widths).enumerate() {
        let v = field.velocity(&a, t, o)?;
        if v.len() != a.len() {
            return Err(Error::invalid(format!(
                "field returned {} components for a {}-dimensional state",
                v.len(),
                a.len()
            )));
        }
        for (x, vx) in a.iter_mut().zip(&v) {
            *x += w * vx;
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::IntegrationDiverged { step: k });
        }
        // The next evaluation time is the end of this interval; the last interval ends at 1.
        times.push(eval_times.get(k + 1).copied().unwrap_or(1.0));
        states.push(a.clone());
    }
    Ok(Trajectory {
        times,
        states,
        field_evals: n,
    })
}

/// Closed-form velocity fields with known flows, used as oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum AnalyticField {
    /// `v = c`.
    Constant(Vec<f64>),
    /// `v = -x / (1 - t)`: the exact marginal field when the data collapse to 0.
    MarginalToZero,
    /// `v_i = p(t)` in every dimension, `p` given by ascending coefficients.
    TimePoly(Vec<f64>),
    /// `v = a * p(t)`.
    ScaledState(Vec<f64>),
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_integral(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * t.powi(k as i32 + 1) / (k + 1) as f64)
        .sum()
}

impl AnalyticField {
    pub fn eval(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        match self {
            AnalyticField::Constant(c) => {
                if c.len() != a.len() {
                    return Err(Error::invalid(format!(
                        "constant field has {} components, state has {}",
                        c.len(),
                        a.len()
                    )));
                }
                Ok(c.clone())
            }
            AnalyticField::MarginalToZero => {
                if t >= 1.0 {
                    return Err(Error::Domain(format!(
                        "-x/(1-t) is undefined at t = {t} >= 1"
                    )));
                }
                let s = 1.0 - t;
                Ok(a.iter().map(|x| -x / s).collect())
            }
            AnalyticField::TimePoly(c) => Ok(vec![poly(c, t); a.len()]),
            AnalyticField::ScaledState(c) => {
                let p = poly(c, t);
                Ok(a.iter().map(|x| x * p).collect())
            }
        }
    }

    /// Exact solution of `da/dt = v(a, t)` at time `t` from `a0` at time 0.
    pub fn exact_flow(&self, a0: &[f64], t: f64) -> Vec<f64> {
        match self {
            AnalyticField::Constant(c) => a0.iter().zip(c).map(|(x, c)| x + c * t).collect(),
            AnalyticField::MarginalToZero => a0.iter().map(|x| (1.0 - t) * x).collect(),
            AnalyticField::TimePoly(c) => {
                let p = poly_integral(c, t);
                a0.iter().map(|x| x + p).collect()
            }
            AnalyticField::ScaledState(c) => {
                let g = poly_integral(c, t).exp();
                a0.iter().map(|x| x * g).collect()
            }
        }
    }
}

impl VelocityField for AnalyticField {
    fn velocity(&self, a: &[f64], t: f64, _o: &[f64]) -> Result<Vec<f64>> {
        self.eval(a, t)
    }
}

/// Evaluates a closed-form field; see [`AnalyticField::eval`].
pub fn eval_analytic(field: &AnalyticField, a: &[f64], t: f64) -> Result<Vec<f64>> {
    field.eval(a, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_arithmetic() {
        let s = SolverSchedule::dense_jump(4, 0.5).unwrap();
        assert!((s.dt() - 0.5 / 3.0).abs() < 1e-15);
        let ts = s.eval_times();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[0], 0.0);
        assert!((ts[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((ts[2] - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(ts[3], 0.5);

        let u = SolverSchedule::uniform(2).unwrap();
        assert_eq!(u.dt(), 0.5);
        assert_eq!(u.eval_times(), vec![0.0, 0.5]);

        let one = SolverSchedule::dense_jump(1, 0.5).unwrap();
        assert_eq!(one.eval_times(), vec![0.0]);
        assert_eq!(one.step_widths(), vec![1.0]);
    }

    #[test]
    fn schedule_errors() {
        assert!(build_schedule(SolverKind::UniformEuler, 0, None).is_err());
        assert!(build_schedule(SolverKind::DenseJump, 4, Some(1.0)).is_err());
        assert!(build_schedule(SolverKind::DenseJump, 4, Some(0.0)).is_err());
        assert!(build_schedule(SolverKind::DenseJump, 4, None).is_err());
        assert!(build_schedule(SolverKind::DenseJump, 1, None).is_ok());
    }

    #[test]
    fn constant_field_is_exact() {
        let f = AnalyticField::Constant(vec![1.0, -1.0]);
        for sched in [
            SolverSchedule::uniform(1).unwrap(),
            SolverSchedule::uniform(7).unwrap(),
            SolverSchedule::dense_jump(5, 0.3).unwrap(),
            SolverSchedule::dense_jump(64, 0.5).unwrap(),
        ] {
            let tr = integrate(&f, &[0.25, 2.0], &[], &sched).unwrap();
            let end = tr.final_state();
            assert!((end[0] - 1.25).abs() < 1e-12);
            assert!((end[1] - 1.0).abs() < 1e-12);
            assert_eq!(tr.field_evals, sched.steps);
            assert_eq!(*tr.times.last().unwrap(), 1.0);
            assert_eq!(tr.times.len(), tr.states.len());
        }
    }

    #[test]
    fn time_poly_dense_jump_two_steps() {
        let f = AnalyticField::TimePoly(vec![0.0, 1.0]);
        let tr = integrate(
            &f,
            &[1.0],
            &[],
            &SolverSchedule::dense_jump(2, 0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(tr.final_state(), &[1.25]);
        assert_eq!(tr.times, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn marginal_field_uniform_four_steps() {
        let tr = integrate(
            &AnalyticField::MarginalToZero,
            &[2.0],
            &[],
            &SolverSchedule::uniform(4).unwrap(),
        )
        .unwrap();
        let xs: Vec<f64> = tr.states.iter().map(|s| s[0]).collect();
        assert_eq!(xs, vec![2.0, 1.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn analytic_values() {
        let m = AnalyticField::MarginalToZero;
        assert_eq!(eval_analytic(&m, &[2.0], 0.5).unwrap(), vec![-4.0]);
        let v = eval_analytic(&m, &[2.0], 0.99).unwrap()[0];
        assert!((v + 200.0).abs() < 1e-9);
        assert!(matches!(
            eval_analytic(&m, &[2.0], 1.0),
            Err(Error::Domain(_))
        ));
        let c = AnalyticField::Constant(vec![1.0, -1.0]);
        assert_eq!(
            eval_analytic(&c, &[5.0, 5.0], 0.7).unwrap(),
            vec![1.0, -1.0]
        );
    }

    #[test]
    fn divergence_reports_step() {
        let f = FnField(|a: &[f64], _t: f64, _o: &[f64]| {
            vec![if a[0] > 1.0 { f64::INFINITY } else { 2.0 }]
        });
        let err = integrate(&f, &[0.0], &[], &SolverSchedule::uniform(4).unwrap()).unwrap_err();
        assert!(
            matches!(err, Error::IntegrationDiverged { step: 3 }),
            "{err}"
        );
    }

    #[test]
    fn euler_is_first_order() {
        let f = AnalyticField::ScaledState(vec![0.0, 1.0]);
        let exact = 0.5f64.exp();
        let err = |n| {
            let tr = integrate(&f, &[1.0], &[], &SolverSchedule::uniform(n).unwrap()).unwrap();
            (tr.final_state()[0] - exact).abs()
        };
        for n in [16, 32, 64] {
            let ratio = err(n) / err(2 * n);
            assert!((1.7..=2.3).contains(&ratio), "N={n}: ratio {ratio}");
        }
    }

    #[test]
    fn trajectory_csv() {
        let tr = integrate(
            &AnalyticField::Constant(vec![1.0, 2.0]),
            &[0.0, 0.0],
            &[],
            &SolverSchedule::uniform(2).unwrap(),
        )
        .unwrap();
        assert_eq!(tr.to_csv(), "t,dim_0,dim_1\n0,0,0\n0.5,0.5,1\n1,1,2\n");
    }

    proptest! {
        #[test]
        fn single_step_kinds_agree(c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, x in -3.0f64..3.0, tj in 0.01f64..0.99) {
            let f = FnField(move |a: &[f64], t: f64, o: &[f64]| vec![c0 * a[0] + c1 * t + o[0]]);
            let u = integrate(&f, &[x], &[0.5], &SolverSchedule::uniform(1).unwrap()).unwrap();
            let d = integrate(&f, &[x], &[0.5], &SolverSchedule::dense_jump(1, tj).unwrap()).unwrap();
            prop_assert_eq!(u.final_state()[0].to_bits(), d.final_state()[0].to_bits());
        }

        #[test]
        fn budget_and_endpoints(n in 1usize..80, tj in 0.01f64..0.99, dense in any::<bool>()) {
            let sched = if dense {
                SolverSchedule::dense_jump(n, tj).unwrap()
            } else {
                SolverSchedule::uniform(n).unwrap()
            };
            let tr = integrate(&AnalyticField::TimePoly(vec![1.0]), &[0.0], &[], &sched).unwrap();
            prop_assert_eq!(tr.field_evals, n);
            prop_assert_eq!(tr.times.len(), n + 1);
            prop_assert_eq!(tr.times[0], 0.0);
            prop_assert_eq!(*tr.times.last().unwrap(), 1.0);
            prop_assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
            let span: f64 = sched.step_widths().iter().sum();
            prop_assert!((span - 1.0).abs() < 1e-12);
        }
    }
}
