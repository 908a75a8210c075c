//! Training-time distributions over the flow time `t`.
//!
//! `Beta(alpha, alpha)` with `alpha < 1` is U-shaped: it puts extra mass near
//! both `t = 0` and `t = 1`. `alpha = 1` is exactly the uniform law and is
//! sampled through the same code path as [`TimeSchedule::Uniform`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeSchedule {
    Uniform,
    Beta { alpha: f64 },
}

impl Default for TimeSchedule {
    fn default() -> Self {
        TimeSchedule::Beta { alpha: 0.2 }
    }
}

impl TimeSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeSchedule::Uniform => Ok(()),
            TimeSchedule::Beta { alpha } if alpha > 0.0 && alpha <= 1.0 => Ok(()),
            TimeSchedule::Beta { alpha } => Err(Error::invalid(format!(
                "alpha must be in (0, 1], got {alpha}"
            ))),
        }
    }

    /// True for schedules that draw from the uniform law, including `Beta(1, 1)`.
    pub fn is_uniform(&self) -> bool {
        matches!(
            self,
            TimeSchedule::Uniform | TimeSchedule::Beta { alpha: 1.0 }
        )
    }

    /// One draw in `[0, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TimeSchedule::Beta { alpha } if alpha != 1.0 => johnk_symmetric(alpha, rng),
            _ => rng.random::<f64>(),
        }
    }
}

/// Draws `n` i.i.d. times from `schedule`.
pub fn sample_times<R: Rng + ?Sized>(
    schedule: &TimeSchedule,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if let TimeSchedule::Beta { alpha } = *schedule {
        if !(alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
    }
    Ok((0..n).map(|_| schedule.sample(rng)).collect())
}

/// Jöhnk's rejection sampler for `Beta(alpha, alpha)`.
///
/// Works in log space so that `u^(1/alpha)` cannot underflow to zero for
/// small `alpha`.
fn johnk_symmetric<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let inv = 1.0 / alpha;
    loop {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        if u == 0.0 || v == 0.0 {
            continue;
        }
        let lx = u.ln() * inv;
        let ly = v.ln() * inv;
        let m = lx.max(ly);
        let log_sum = m + ((lx - m).exp() + (ly - m).exp()).ln();
        if log_sum <= 0.0 {
            return (lx - log_sum).exp().clamp(0.0, 1.0);
        }
    }
}

/// `ln B(alpha, alpha)`.
pub fn ln_beta_symmetric(alpha: f64) -> f64 {
    2.0 * ln_gamma(alpha) - ln_gamma(2.0 * alpha)
}

/// Density of `Beta(alpha, alpha)` at `t`.
pub fn beta_density(alpha: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} is outside [0, 1]")));
    }
    if (t == 0.0 || t == 1.0) && alpha < 1.0 {
        return Err(Error::Domain(format!(
            "density diverges at t = {t} for alpha = {alpha} < 1"
        )));
    }
    if alpha == 1.0 {
        return Ok(1.0);
    }
    if t == 0.0 || t == 1.0 {
        // alpha > 1: the density vanishes at the endpoints.
        return Ok(0.0);
    }
    let log_pdf = (alpha - 1.0) * (t.ln() + (1.0 - t).ln()) - ln_beta_symmetric(alpha);
    Ok(log_pdf.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_mean_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts = sample_times(&TimeSchedule::Uniform, 100_000, &mut rng).unwrap();
        let mean = ts.iter().sum::<f64>() / ts.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean = {mean}");
    }

    #[test]
    fn beta_samples_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for alpha in [0.01, 0.2, 0.5, 0.9] {
            let ts = sample_times(&TimeSchedule::Beta { alpha }, 20_000, &mut rng).unwrap();
            assert!(ts.iter().all(|t| (0.0..=1.0).contains(t)));
        }
    }

    #[test]
    fn u_shape_puts_more_mass_near_endpoints_than_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = sample_times(&TimeSchedule::Beta { alpha: 0.2 }, 100_000, &mut rng).unwrap();
        let frac = ts.iter().filter(|&&t| t <= 0.05 || t >= 0.95).count() as f64 / 1e5;
        assert!(frac > 0.10, "endpoint fraction {frac}");
    }

    #[test]
    fn alpha_one_shares_the_uniform_stream() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let u = sample_times(&TimeSchedule::Uniform, 500, &mut a).unwrap();
        let v = sample_times(&TimeSchedule::Beta { alpha: 1.0 }, 500, &mut b).unwrap();
        assert_eq!(u, v);
    }

    #[test]
    fn sampling_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_times(&TimeSchedule::Beta { alpha: 0.0 }, 5, &mut rng).is_err());
        assert!(sample_times(&TimeSchedule::Beta { alpha: -1.0 }, 5, &mut rng).is_err());
        assert!(sample_times(&TimeSchedule::Uniform, 0, &mut rng).is_err());
    }

    #[test]
    fn density_values() {
        assert_eq!(beta_density(1.0, 0.3).unwrap(), 1.0);
        let d = beta_density(0.5, 0.5).unwrap();
        assert!((d - 2.0 / std::f64::consts::PI).abs() < 1e-12, "{d}");
        assert!(beta_density(0.2, 0.01).unwrap() > beta_density(0.2, 0.5).unwrap());
        assert!(matches!(beta_density(0.2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(beta_density(0.2, 1.0), Err(Error::Domain(_))));
        assert!(beta_density(0.0, 0.5).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(TimeSchedule::Beta { alpha: 1.5 }.validate().is_err());
        assert!(TimeSchedule::Beta { alpha: 0.0 }.validate().is_err());
        assert!(TimeSchedule::Beta { alpha: 1.0 }.validate().is_ok());
        assert!(TimeSchedule::Beta { alpha: 1.0 }.is_uniform());
    }
}
