use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    fn segment_hits(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        // Liang-Barsky clip of the segment against the box.
        let d = [q[0] - p[0], q[1] - p[1]];
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for k in 0..2 {
            if d[k] == 0.0 {
                if p[k] < self.min[k] || p[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let mut t0 = (self.min[k] - p[k]) / d[k];
            let mut t1 = (self.max[k] - p[k]) / d[k];
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return false;
            }
        }
        true
    }
}

/// Task family plus its geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    /// Reach `goal` from `start` around a disc obstacle. At the start of each
    /// episode the expert commits to the right or left detour waypoint
    /// `(centre.x +/- detour, centre.y)`, choosing right with probability
    /// `sigmoid(side_preference * (x - centre.x))`. Both sides are equally
    /// likely overall and exactly so on the centre line.
    TwoModeReach {
        start: [f64; 2],
        goal: [f64; 2],
        obstacle_centre: [f64; 2],
        obstacle_radius: f64,
        detour: f64,
        side_preference: f64,
    },
    /// Stateless: the observation is `(cos h, sin h)` for a hint angle `h` and
    /// the expert answers with a point on the ring of `ring_radius` at angle
    /// `h - mode_offset` or `h + mode_offset`.
    RingMixture { ring_radius: f64, mode_offset: f64 },
    /// Navigate a walled box by following `waypoints` in order.
    PointMaze {
        start: [f64; 2],
        goal: [f64; 2],
        bounds: Rect,
        walls: Vec<Rect>,
        waypoints: Vec<[f64; 2]>,
    },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::TwoModeReach { .. } => "two_mode_reach",
            TaskKind::RingMixture { .. } => "ring_mixture",
            TaskKind::PointMaze { .. } => "point_maze",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub action_dim: usize,
    pub obs_dim: usize,
    /// Control steps per episode.
    pub horizon: usize,
    /// Success radius around the goal (or around a ring mode).
    pub goal_radius: f64,
    /// Actions are clipped to this Euclidean norm (reach and maze tasks).
    pub max_step: f64,
    /// Half-width of the uniform start-position jitter along x.
    pub start_noise: f64,
    /// Std of the Gaussian noise the expert adds to each action.
    pub action_noise: f64,
    /// Reward added on the step the success predicate first holds.
    pub success_bonus: f64,
}

impl TaskSpec {
    pub fn two_mode_reach() -> Self {
        Self {
            kind: TaskKind::TwoModeReach {
                start: [0.0, 0.0],
                goal: [0.0, 4.0],
                obstacle_centre: [0.0, 2.0],
                obstacle_radius: 0.8,
                detour: 1.5,
                side_preference: 20.0,
            },
            action_dim: 2,
            obs_dim: 2,
            horizon: 40,
            goal_radius: 0.2,
            max_step: 0.25,
            start_noise: 0.3,
            action_noise: 0.02,
            success_bonus: 10.0,
        }
    }

    pub fn ring_mixture() -> Self {
        Self {
            kind: TaskKind::RingMixture {
                ring_radius: 2.0,
                mode_offset: std::f64::consts::FRAC_PI_6,
            },
            action_dim: 2,
            obs_dim: 2,
            horizon: 1,
            goal_radius: 0.3,
            max_step: 4.0,
            start_noise: 0.0,
            action_noise: 0.05,
            success_bonus: 1.0,
        }
    }

    pub fn point_maze() -> Self {
        Self {
            kind: TaskKind::PointMaze {
                start: [0.5, 0.5],
                goal: [0.5, 3.5],
                bounds: Rect {
                    min: [0.0, 0.0],
                    max: [4.0, 4.0],
                },
                walls: vec![Rect {
                    min: [0.0, 1.8],
                    max: [3.0, 2.2],
                }],
                waypoints: vec![[3.5, 1.0], [3.5, 3.0]],
            },
            action_dim: 2,
            obs_dim: 2,
            horizon: 50,
            goal_radius: 0.2,
            max_step: 0.25,
            start_noise: 0.2,
            action_noise: 0.02,
            success_bonus: 10.0,
        }
    }

    /// Preset settings for a task name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "two_mode_reach" => Ok(Self::two_mode_reach()),
            "ring_mixture" => Ok(Self::ring_mixture()),
            "point_maze" => Ok(Self::point_maze()),
            other => Err(Error::invalid(format!(
                "unknown task {other:?} (expected two_mode_reach, ring_mixture or point_maze)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if self.action_dim != 2 || self.obs_dim != 2 {
            return Err(Error::invalid(format!(
                "{} uses 2-dimensional observations and actions, got obs_dim {} and action_dim {}",
                self.name(),
                self.obs_dim,
                self.action_dim
            )));
        }
        let positive = [
            ("goal_radius", self.goal_radius),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("start_noise", self.start_noise),
            ("action_noise", self.action_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        match &self.kind {
            TaskKind::TwoModeReach {
                obstacle_radius,
                detour,
                side_preference,
                ..
            } => {
                if !(*obstacle_radius > 0.0 && *detour > *obstacle_radius) {
                    return Err(Error::invalid("detour must exceed obstacle_radius > 0"));
                }
                if !(*side_preference >= 0.0 && side_preference.is_finite()) {
                    return Err(Error::invalid("side_preference must be finite and >= 0"));
                }
            }
            TaskKind::RingMixture {
                ring_radius,
                mode_offset,
            } => {
                if !(*ring_radius > 0.0
                    && *mode_offset > 0.0
                    && *mode_offset < std::f64::consts::FRAC_PI_2)
                {
                    return Err(Error::invalid(
                        "ring_radius must be > 0 and mode_offset in (0, pi/2)",
                    ));
                }
            }
            TaskKind::PointMaze { waypoints, .. } => {
                if waypoints.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("waypoints must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Scales `a` down to `max_step` norm if needed.
    pub fn clip_action(&self, a: &mut [f64]) {
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > self.max_step {
            let s = self.max_step / n;
            a.iter_mut().for_each(|x| *x *= s);
        }
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Distance from `c` to the segment `p -> q`.
fn segment_distance(p: [f64; 2], q: [f64; 2], c: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    dist([p[0] + s * d[0], p[1] + s * d[1]], c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub collided: bool,
}

/// Mutable episode state for one task.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    spec: &'a TaskSpec,
    pos: [f64; 2],
    hint: f64,
    steps: usize,
    successes: usize,
    done: bool,
}

impl<'a> Env<'a> {
    pub fn reset<R: Rng + ?Sized>(spec: &'a TaskSpec, rng: &mut R) -> Self {
        let jitter = |rng: &mut R| {
            if spec.start_noise > 0.0 {
                rng.random_range(-spec.start_noise..=spec.start_noise)
            } else {
                0.0
            }
        };
        let (pos, hint) = match &spec.kind {
            TaskKind::TwoModeReach { start, .. } | TaskKind::PointMaze { start, .. } => {
                ([start[0] + jitter(rng), start[1]], 0.0)
            }
            TaskKind::RingMixture { .. } => {
                ([0.0, 0.0], rng.random_range(0.0..std::f64::consts::TAU))
            }
        };
        Self {
            spec,
            pos,
            hint,
            steps: 0,
            successes: 0,
            done: false,
        }
    }

    pub fn spec(&self) -> &TaskSpec {
        self.spec
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn hint(&self) -> f64 {
        self.hint
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn obs(&self) -> Vec<f64> {
        match self.spec.kind {
            TaskKind::RingMixture { .. } => vec![self.hint.cos(), self.hint.sin()],
            _ => self.pos.to_vec(),
        }
    }

    /// The two ring modes for the current hint.
    pub fn ring_modes(&self) -> Option<[[f64; 2]; 2]> {
        match self.spec.kind {
            TaskKind::RingMixture {
                ring_radius,
                mode_offset,
            } => {
                let m = |a: f64| [ring_radius * a.cos(), ring_radius * a.sin()];
                Some([m(self.hint - mode_offset), m(self.hint + mode_offset)])
            }
            _ => None,
        }
    }

    /// Applies `action` (clipped to `max_step`) and advances one control step.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &[f64], rng: &mut R) -> StepOutcome {
        assert!(!self.done, "step called on a finished episode");
        let mut a = [action[0], action[1]];
        self.spec.clip_action(&mut a);
        self.steps += 1;
        let spec = self.spec;
        let out = match &spec.kind {
            TaskKind::RingMixture { .. } => {
                let modes = self.ring_modes().expect("ring task");
                let d = dist(a, modes[0]).min(dist(a, modes[1]));
                let hit = d < spec.goal_radius;
                if hit {
                    self.successes += 1;
                }
                let done = self.steps >= spec.horizon;
                let success = done && self.successes == self.steps;
                if !done {
                    self.hint = rng.random_range(0.0..std::f64::consts::TAU);
                }
                StepOutcome {
                    reward: -d + if success { spec.success_bonus } else { 0.0 },
                    done,
                    success,
                    collided: false,
                }
            }
            TaskKind::TwoModeReach {
                goal,
                obstacle_centre,
                obstacle_radius,
                ..
            } => {
                let next = [self.pos[0] + a[0], self.pos[1] + a[1]];
                let collided =
                    segment_distance(self.pos, next, *obstacle_centre) < *obstacle_radius;
                self.finish_move(next, *goal, collided)
            }
            TaskKind::PointMaze {
                goal,
                bounds,
                walls,
                ..
            } => {
                let next = [self.pos[0] + a[0], self.pos[1] + a[1]];
                let outside = (0..2).any(|k| next[k] < bounds.min[k] || next[k] > bounds.max[k]);
                let collided = outside || walls.iter().any(|w| w.segment_hits(self.pos, next));
                self.finish_move(next, *goal, collided)
            }
        };
        self.done = out.done;
        out
    }

    fn finish_move(&mut self, next: [f64; 2], goal: [f64; 2], collided: bool) -> StepOutcome {
        if collided {
            return StepOutcome {
                reward: -dist(self.pos, goal),
                done: true,
                success: false,
                collided: true,
            };
        }
        self.pos = next;
        let d = dist(next, goal);
        let success = d < self.spec.goal_radius;
        StepOutcome {
            reward: -d
                + if success {
                    self.spec.success_bonus
                } else {
                    0.0
                },
            done: success || self.steps >= self.spec.horizon,
            success,
            collided: false,
        }
    }
}

/// Scripted demonstrator. The latent mode (reach detour side) and waypoint
/// progress are drawn or tracked per episode.
#[derive(Debug, Clone)]
pub struct Expert {
    side: f64,
    waypoint: usize,
}

impl Expert {
    /// Draws the latent mode for the episode that `env` has just started.
    pub fn new<R: Rng + ?Sized>(env: &Env<'_>, rng: &mut R) -> Self {
        let p_right = match env.spec().kind {
            TaskKind::TwoModeReach {
                obstacle_centre,
                side_preference,
                ..
            } => 1.0 / (1.0 + (-side_preference * (env.position()[0] - obstacle_centre[0])).exp()),
            _ => 0.5,
        };
        Self {
            side: if rng.random::<f64>() < p_right {
                1.0
            } else {
                -1.0
            },
            waypoint: 0,
        }
    }

    /// +1 for the right-hand detour, -1 for the left.
    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn act<R: Rng + ?Sized>(&mut self, env: &Env<'_>, rng: &mut R) -> Vec<f64> {
        let spec = env.spec();
        let p = env.position();
        let mut a = match &spec.kind {
            TaskKind::RingMixture { .. } => {
                let modes = env.ring_modes().expect("ring task");
                let m = if rng.random_bool(0.5) {
                    modes[0]
                } else {
                    modes[1]
                };
                [m[0], m[1]]
            }
            TaskKind::TwoModeReach {
                goal,
                obstacle_centre,
                detour,
                ..
            } => {
                let w = [obstacle_centre[0] + self.side * detour, obstacle_centre[1]];
                if self.waypoint == 0 && dist(p, w) < spec.max_step {
                    self.waypoint = 1;
                }
                let target = if self.waypoint == 0 { w } else { *goal };
                [target[0] - p[0], target[1] - p[1]]
            }
            TaskKind::PointMaze {
                goal, waypoints, ..
            } => {
                while self.waypoint < waypoints.len()
                    && dist(p, waypoints[self.waypoint]) < spec.max_step
                {
                    self.waypoint += 1;
                }
                let target = waypoints.get(self.waypoint).copied().unwrap_or(*goal);
                [target[0] - p[0], target[1] - p[1]]
            }
        };
        spec.clip_action(&mut a);
        if spec.action_noise > 0.0 {
            for x in a.iter_mut() {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                *x += spec.action_noise * z;
            }
            spec.clip_action(&mut a);
        }
        a.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_validate() {
        for name in ["two_mode_reach", "ring_mixture", "point_maze"] {
            let spec = TaskSpec::preset(name).unwrap();
            spec.validate().unwrap();
            assert_eq!(spec.name(), name);
        }
        assert!(TaskSpec::preset("walker").is_err());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut s = TaskSpec::two_mode_reach();
        s.horizon = 0;
        assert!(s.validate().is_err());
        let mut s = TaskSpec::two_mode_reach();
        s.obs_dim = 3;
        assert!(s.validate().is_err());
        let mut s = TaskSpec::two_mode_reach();
        s.goal_radius = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        for spec in [TaskSpec::two_mode_reach(), TaskSpec::point_maze()] {
            let s = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<TaskSpec>(&s).unwrap(), spec);
        }
    }

    #[test]
    fn obstacle_collision_ends_episode() {
        let spec = TaskSpec::two_mode_reach();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut env = Env::reset(&spec, &mut rng);
        let mut out = None;
        for _ in 0..spec.horizon {
            let o = env.step(&[0.0, 1.0], &mut rng);
            if o.done {
                out = Some(o);
                break;
            }
        }
        let out = out.unwrap();
        assert!(out.collided && !out.success);
    }

    #[test]
    fn maze_wall_blocks_straight_line() {
        let r = Rect {
            min: [0.0, 1.8],
            max: [3.0, 2.2],
        };
        assert!(r.segment_hits([0.5, 1.7], [0.5, 2.3]));
        assert!(!r.segment_hits([3.2, 1.7], [3.2, 2.3]));
        assert!(r.segment_hits([1.0, 1.9], [1.0, 1.95]));
    }

    #[test]
    fn ring_expert_lands_on_a_mode() {
        let spec = TaskSpec::ring_mixture();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let env = Env::reset(&spec, &mut rng);
            let a = Expert::new(&env, &mut rng).act(&env, &mut rng);
            let r = (a[0] * a[0] + a[1] * a[1]).sqrt();
            assert!((r - 2.0).abs() < 5.0 * spec.action_noise);
        }
    }
}
