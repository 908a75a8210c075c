//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain function so the logic can be
//! tested natively; JS-facing errors are only built at the boundary.

use flowdj::bench::{generate_dataset, TaskSpec};
use flowdj::dataset::{NormStats, Table};
use flowdj::model::{train_step, AdamConfig, OptimiserState, VelocityModel};
use flowdj::solver::{integrate, AnalyticField, SolverSchedule};
use flowdj::train::{beta_density, make_coupling, sample_times, TimeSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

fn js(e: flowdj::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `bins` histogram densities of `n` draws, followed by the exact density at
/// the `bins` bin centres.
pub fn beta_histogram_impl(
    alpha: f64,
    n: usize,
    bins: usize,
    seed: u64,
) -> flowdj::Result<Vec<f64>> {
    if bins == 0 {
        return Err(flowdj::Error::InvalidArgument("bins must be >= 1".into()));
    }
    let schedule = TimeSchedule::Beta { alpha };
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = sample_times(&schedule, n, &mut rng)?;
    let mut out = vec![0.0; 2 * bins];
    for t in draws {
        let b = ((t * bins as f64) as usize).min(bins - 1);
        out[b] += 1.0;
    }
    let scale = bins as f64 / n as f64;
    for (i, slot) in out.iter_mut().enumerate() {
        if i < bins {
            *slot *= scale;
        } else {
            let centre = (i - bins) as f64 / bins as f64 + 0.5 / bins as f64;
            *slot = beta_density(alpha, centre)?;
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn beta_histogram(alpha: f64, n: usize, bins: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    beta_histogram_impl(alpha, n, bins, seed).map_err(js)
}

fn named_field(name: &str) -> flowdj::Result<AnalyticField> {
    Ok(match name {
        "ramp" => AnalyticField::TimePoly(vec![0.0, 1.0]),
        "growth" => AnalyticField::ScaledState(vec![0.0, 3.0]),
        "collapse" => AnalyticField::MarginalToZero,
        other => {
            return Err(flowdj::Error::InvalidArgument(format!(
                "unknown field `{other}`"
            )));
        }
    })
}

/// JSON with the exact path and the uniform-Euler and dense-jump paths of a
/// 1-D closed-form field, plus their end-point errors.
pub fn solver_paths_impl(
    field: &str,
    steps: usize,
    t_jump: f64,
    a0: f64,
) -> flowdj::Result<String> {
    let f = named_field(field)?;
    let exact: Vec<[f64; 2]> = (0..=100)
        .map(|i| {
            let t = i as f64 / 100.0;
            [t, f.exact_flow(&[a0], t)[0]]
        })
        .collect();
    let end = f.exact_flow(&[a0], 1.0)[0];
    let path = |s: &SolverSchedule| -> flowdj::Result<(Vec<[f64; 2]>, f64)> {
        let tr = integrate(&f, &[a0], &[], s)?;
        let pts = tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(t, x)| [*t, x[0]])
            .collect();
        Ok((pts, (tr.final_state()[0] - end).abs()))
    };
    let (uni, eu) = path(&SolverSchedule::uniform(steps)?)?;
    let (dj, ed) = path(&SolverSchedule::dense_jump(steps, t_jump)?)?;
    Ok(serde_json::json!({
        "exact": exact,
        "uniform": uni,
        "dense_jump": dj,
        "uniform_error": eu,
        "dense_jump_error": ed,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn solver_paths(field: &str, steps: usize, t_jump: f64, a0: f64) -> Result<String, JsError> {
    solver_paths_impl(field, steps, t_jump, a0).map_err(js)
}

/// A small policy trained in the page on the ring-mixture task: given a hint
/// angle, the expert picks one of two points on a ring.
#[wasm_bindgen]
pub struct RingDemo {
    spec: TaskSpec,
    table: Table,
    norm: NormStats,
    model: VelocityModel,
    opt: OptimiserState,
    schedule: TimeSchedule,
    rng: ChaCha8Rng,
    steps_done: usize,
}

const RING_BATCH: usize = 64;

impl RingDemo {
    pub fn create(episodes: usize, beta: bool, seed: u64) -> flowdj::Result<Self> {
        let spec = TaskSpec::ring_mixture();
        let data = generate_dataset(&spec, episodes, seed)?;
        let norm = NormStats::compute(data.table());
        let table = norm.normalise_table(data.table());
        let model = VelocityModel::init(2, 2, &[64, 64], seed)?;
        let opt = OptimiserState::new(
            AdamConfig {
                learning_rate: 3e-3,
                ..Default::default()
            },
            model.num_params(),
        );
        let schedule = if beta {
            TimeSchedule::Beta { alpha: 0.2 }
        } else {
            TimeSchedule::Uniform
        };
        Ok(Self {
            spec,
            table,
            norm,
            model,
            opt,
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
            steps_done: 0,
        })
    }

    pub fn train_impl(&mut self, steps: usize) -> flowdj::Result<f64> {
        let mut total = 0.0;
        for _ in 0..steps {
            let batch = make_coupling(&self.table, RING_BATCH, &self.schedule, &mut self.rng)?;
            total += train_step(&mut self.model, &mut self.opt, &batch)?;
            self.steps_done += 1;
        }
        Ok(total / steps.max(1) as f64)
    }

    pub fn sample_impl(
        &mut self,
        hint: f64,
        n: usize,
        steps: usize,
        dense_jump: bool,
        t_jump: f64,
    ) -> flowdj::Result<Vec<f64>> {
        let sched = if dense_jump {
            SolverSchedule::dense_jump(steps, t_jump)?
        } else {
            SolverSchedule::uniform(steps)?
        };
        let o = self.norm.normalise_obs(&[hint.cos(), hint.sin()]);
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let a0: Vec<f64> = (0..2)
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect();
            let tr = integrate(&self.model, &a0, &o, &sched)?;
            out.extend(self.norm.denormalise_action(tr.final_state()));
        }
        Ok(out)
    }
}

#[wasm_bindgen]
impl RingDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(episodes: usize, beta: bool, seed: u64) -> Result<RingDemo, JsError> {
        Self::create(episodes, beta, seed).map_err(js)
    }

    /// Runs `steps` optimiser steps and returns their mean loss.
    pub fn train(&mut self, steps: usize) -> Result<f64, JsError> {
        self.train_impl(steps).map_err(js)
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    /// `n` sampled actions as a flat `[x0, y0, x1, y1, ...]` array.
    pub fn sample(
        &mut self,
        hint: f64,
        n: usize,
        steps: usize,
        dense_jump: bool,
        t_jump: f64,
    ) -> Result<Vec<f64>, JsError> {
        self.sample_impl(hint, n, steps, dense_jump, t_jump)
            .map_err(js)
    }

    /// The two expert modes for `hint`, flat `[x0, y0, x1, y1]`.
    pub fn modes(&self, hint: f64) -> Vec<f64> {
        match self.spec.kind {
            flowdj::bench::TaskKind::RingMixture {
                ring_radius,
                mode_offset,
            } => [hint - mode_offset, hint + mode_offset]
                .iter()
                .flat_map(|a| [ring_radius * a.cos(), ring_radius * a.sin()])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn goal_radius(&self) -> f64 {
        self.spec.goal_radius
    }
}
