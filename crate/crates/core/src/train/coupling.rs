use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::Table;
use crate::error::{Error, Result};

use super::schedule::TimeSchedule;

/// A batch of linear-path training tuples, stored row-major.
///
/// For every row `at = (1 - t) * a0 + t * a1` and `target_v = a1 - a0`,
/// exactly as computed by [`CouplingBatch::from_endpoints`].
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBatch {
    action_dim: usize,
    obs_dim: usize,
    a0: Vec<f64>,
    a1: Vec<f64>,
    t: Vec<f64>,
    at: Vec<f64>,
    target_v: Vec<f64>,
    obs: Vec<f64>,
}

impl CouplingBatch {
    pub fn from_endpoints(
        action_dim: usize,
        obs_dim: usize,
        a0: Vec<f64>,
        a1: Vec<f64>,
        t: Vec<f64>,
        obs: Vec<f64>,
    ) -> Result<Self> {
        let n = t.len();
        if n == 0 {
            return Err(Error::invalid("batch must be non-empty"));
        }
        if action_dim == 0 {
            return Err(Error::invalid("action_dim must be >= 1"));
        }
        if a0.len() != n * action_dim || a1.len() != n * action_dim {
            return Err(Error::invalid("a0/a1 length does not match n * action_dim"));
        }
        if obs.len() != n * obs_dim {
            return Err(Error::invalid("obs length does not match n * obs_dim"));
        }
        if let Some(bad) = t.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::invalid(format!("t = {bad} is outside [0, 1]")));
        }
        let mut at = Vec::with_capacity(a0.len());
        let mut target_v = Vec::with_capacity(a0.len());
        for i in 0..n {
            let ti = t[i];
            for k in 0..action_dim {
                let j = i * action_dim + k;
                at.push((1.0 - ti) * a0[j] + ti * a1[j]);
                target_v.push(a1[j] - a0[j]);
            }
        }
        Ok(Self {
            action_dim,
            obs_dim,
            a0,
            a1,
            t,
            at,
            target_v,
            obs,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn a0(&self, i: usize) -> &[f64] {
        &self.a0[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn a1(&self, i: usize) -> &[f64] {
        &self.a1[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.at[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn target_v(&self, i: usize) -> &[f64] {
        &self.target_v[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }
}

/// Samples a batch: `(o, a1)` rows uniformly with replacement, `a0 ~ N(0, I)`,
/// `t` from `schedule`.
pub fn make_coupling<R: Rng + ?Sized>(
    data: &Table,
    batch_size: usize,
    schedule: &TimeSchedule,
    rng: &mut R,
) -> Result<CouplingBatch> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let (da, dobs) = (data.action_dim(), data.obs_dim());
    let mut a0 = Vec::with_capacity(batch_size * da);
    let mut a1 = Vec::with_capacity(batch_size * da);
    let mut obs = Vec::with_capacity(batch_size * dobs);
    let mut t = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let row = rng.random_range(0..data.len());
        a1.extend_from_slice(data.action(row));
        obs.extend_from_slice(data.obs(row));
        for _ in 0..da {
            a0.push(rng.sample::<f64, _>(StandardNormal));
        }
        t.push(schedule.sample(rng));
    }
    CouplingBatch::from_endpoints(da, dobs, a0, a1, t, obs)
}

/// Pairs every row of `data` with `draws` noise samples and times; used for
/// fixed validation batches.
pub fn full_coupling<R: Rng + ?Sized>(
    data: &Table,
    draws: usize,
    schedule: &TimeSchedule,
    rng: &mut R,
) -> Result<CouplingBatch> {
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let (da, dobs) = (data.action_dim(), data.obs_dim());
    let n = data.len() * draws;
    let mut a0 = Vec::with_capacity(n * da);
    let mut a1 = Vec::with_capacity(n * da);
    let mut obs = Vec::with_capacity(n * dobs);
    let mut t = Vec::with_capacity(n);
    for row in 0..data.len() {
        for _ in 0..draws {
            a1.extend_from_slice(data.action(row));
            obs.extend_from_slice(data.obs(row));
            for _ in 0..da {
                a0.push(rng.sample::<f64, _>(StandardNormal));
            }
            t.push(schedule.sample(rng));
        }
    }
    CouplingBatch::from_endpoints(da, dobs, a0, a1, t, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_row_keeps_a0() {
        let b = CouplingBatch::from_endpoints(
            2,
            0,
            vec![0.5, -1.0, 0.5, -1.0],
            vec![0.5, -1.0, 0.5, -1.0],
            vec![0.3, 0.9],
            vec![],
        )
        .unwrap();
        for i in 0..2 {
            assert_eq!(b.at(i), &[0.5, -1.0]);
            assert_eq!(b.target_v(i), &[0.0, 0.0]);
        }
    }

    #[test]
    fn endpoint_identities() {
        let b = CouplingBatch::from_endpoints(
            1,
            1,
            vec![0.25, 0.25],
            vec![3.0, 3.0],
            vec![0.0, 1.0],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(b.at(0), &[0.25]);
        assert_eq!(b.at(1), &[3.0]);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(CouplingBatch::from_endpoints(1, 0, vec![], vec![], vec![], vec![]).is_err());
        assert!(
            CouplingBatch::from_endpoints(2, 0, vec![1.0], vec![1.0], vec![0.5], vec![]).is_err()
        );
        let empty = Table::new(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_coupling(&empty, 4, &TimeSchedule::Uniform, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn interpolation_identities_hold(seed in any::<u64>(), alpha in 0.05f64..1.0) {
            let mut table = Table::new(3, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..7 {
                let o: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let a: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                table.push(&o, &a);
            }
            let b = make_coupling(&table, 32, &TimeSchedule::Beta { alpha }, &mut rng).unwrap();
            for i in 0..b.len() {
                let t = b.t()[i];
                for k in 0..2 {
                    let expect = (1.0 - t) * b.a0(i)[k] + t * b.a1(i)[k];
                    prop_assert_eq!(b.at(i)[k], expect);
                    prop_assert_eq!(b.target_v(i)[k], b.a1(i)[k] - b.a0(i)[k]);
                    let rebuilt = b.at(i)[k] + (1.0 - t) * b.target_v(i)[k];
                    prop_assert!((rebuilt - b.a1(i)[k]).abs() <= 1e-12 * (1.0 + b.a1(i)[k].abs()));
                }
            }
        }
    }
}
