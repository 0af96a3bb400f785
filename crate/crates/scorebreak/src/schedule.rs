//! Diffusion noise schedule and forward noising transforms.
//!
//! The schedule holds per-step signal retentions `alpha_t` and their
//! cumulative products `alpha_bar_t`; both training and the attack loop read
//! it. All operations are pure; the schedule is immutable once built.

use ndarray::Array3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Named schedule family plus endpoints, serialized inside experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub family: ScheduleFamily,
    /// Variance at t = 1.
    pub beta_start: f64,
    /// Variance at t = T.
    pub beta_end: f64,
    /// Number of diffusion steps.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleFamily {
    /// beta_t interpolates linearly between the endpoints.
    Linear,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            family: ScheduleFamily::Linear,
            beta_start: 1e-4,
            beta_end: 2e-2,
            steps: 1000,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.family, self.beta_start, self.beta_end)
    }
}

/// Immutable noise schedule: `alpha_t` in (0,1] and strictly decreasing
/// cumulative products `alpha_bar_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Build a schedule from a variance family. Endpoints must keep every
/// `alpha_t = 1 - beta_t` inside (0, 1]; the degenerate zero-variance
/// endpoint (`alpha_t = 1`) is permitted for testing.
pub fn build_schedule(
    steps: usize,
    family: ScheduleFamily,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::InvalidSchedule("step count must be >= 1".into()));
    }
    let betas: Vec<f64> = match family {
        ScheduleFamily::Linear => (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect(),
    };
    let mut alphas = Vec::with_capacity(steps);
    let mut alpha_bars = Vec::with_capacity(steps);
    let mut prod = 1.0;
    for (i, beta) in betas.iter().enumerate() {
        let alpha = 1.0 - beta;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "alpha_{} = {alpha} outside (0, 1]",
                i + 1
            )));
        }
        prod *= alpha;
        alphas.push(alpha);
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { alphas, alpha_bars })
}

impl NoiseSchedule {
    /// Maximum timestep T.
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidTimestep {
                t,
                max: self.steps(),
            });
        }
        Ok(())
    }

    /// Per-step retention `alpha_t`, 1-based t.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alphas[t - 1])
    }

    /// Cumulative retention `alpha_bar_t`, 1-based t.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

/// Jump straight from the clean sample to step t:
/// `x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * z`.
pub fn forward_diffuse(
    x0: &ImageTensor,
    t: usize,
    z: &ImageTensor,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    let ab = sched.alpha_bar(t)?;
    x0.zip_with(z, |x, n| ab.sqrt() * x + (1.0 - ab).sqrt() * n)
}

/// One diffusion step from x_{t-1} to x_t:
/// `x_t = sqrt(alpha_t) * x_{t-1} + sqrt(1 - alpha_t) * z`.
pub fn single_step_diffuse(
    x_prev: &ImageTensor,
    t: usize,
    z: &ImageTensor,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    let a = sched.alpha(t)?;
    x_prev.zip_with(z, |x, n| a.sqrt() * x + (1.0 - a).sqrt() * n)
}

/// Standard-normal tensor with the shape of `like`.
pub fn gaussian_like<R: Rng>(like: &ImageTensor, rng: &mut R) -> ImageTensor {
    let (h, w, c) = like.dim();
    let data = Array3::from_shape_simple_fn((h, w, c), || rng.sample::<f64, _>(StandardNormal));
    ImageTensor::new(data, like.range())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_sched() -> NoiseSchedule {
        ScheduleSpec::default().build().unwrap()
    }

    #[test]
    fn linear_first_alpha_matches_endpoint() {
        let s = default_sched();
        assert_eq!(s.steps(), 1000);
        assert!((s.alpha(1).unwrap() - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn single_step_zero_variance_is_identity() {
        let s = build_schedule(1, ScheduleFamily::Linear, 0.0, 0.0).unwrap();
        assert_eq!(s.alpha(1).unwrap(), 1.0);
        assert_eq!(s.alpha_bar(1).unwrap(), 1.0);
    }

    #[test]
    fn rejects_zero_steps_and_bad_endpoints() {
        assert!(build_schedule(0, ScheduleFamily::Linear, 1e-4, 2e-2).is_err());
        assert!(build_schedule(10, ScheduleFamily::Linear, 0.5, 1.5).is_err());
        assert!(build_schedule(10, ScheduleFamily::Linear, -0.1, 0.01).is_err());
    }

    #[test]
    fn alpha_bar_matches_bruteforce_product() {
        let s = default_sched();
        for t in [1usize, 2, 17, 500, 1000] {
            let product: f64 = (1..=t).map(|i| s.alpha(i).unwrap()).product();
            let got = s.alpha_bar(t).unwrap();
            assert!(
                (got - product).abs() <= 1e-12 * product.max(1e-30),
                "t={t}: {got} vs {product}"
            );
        }
    }

    #[test]
    fn timestep_bounds_are_enforced() {
        let s = default_sched();
        assert!(s.alpha(0).is_err());
        assert!(s.alpha(1001).is_err());
        assert!(s.alpha_bar(1000).is_ok());
    }

    #[test]
    fn forward_diffuse_noiseless_limit() {
        let s = default_sched();
        let x0 = ImageTensor::from_fn(3, 3, 1, |i, j, _| (i + 2 * j) as f64 / 10.0 - 0.4);
        let z = ImageTensor::zeros(3, 3, 1);
        let t = 700;
        let out = forward_diffuse(&x0, t, &z, &s).unwrap();
        let ab = s.alpha_bar(t).unwrap();
        for (o, x) in out.data().iter().zip(x0.data().iter()) {
            assert!((o - ab.sqrt() * x).abs() <= 1e-15);
        }
    }

    #[test]
    fn forward_diffuse_degenerate_alpha_bar_one() {
        let s = build_schedule(3, ScheduleFamily::Linear, 0.0, 0.0).unwrap();
        let x0 = ImageTensor::from_fn(2, 2, 1, |i, _, _| i as f64 - 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = gaussian_like(&x0, &mut rng);
        let out = forward_diffuse(&x0, 3, &z, &s).unwrap();
        assert_eq!(out.max_abs_diff(&x0), 0.0);
    }

    #[test]
    fn forward_diffuse_matches_elementwise_oracle() {
        let s = default_sched();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = gaussian_like(&ImageTensor::zeros(4, 5, 3), &mut rng);
        let z = gaussian_like(&x0, &mut rng);
        let t = 321;
        let out = forward_diffuse(&x0, t, &z, &s).unwrap();
        let ab = s.alpha_bar(t).unwrap();
        for ((o, x), n) in out
            .data()
            .iter()
            .zip(x0.data().iter())
            .zip(z.data().iter())
        {
            let expect = ab.sqrt() * x + (1.0 - ab).sqrt() * n;
            assert!((o - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_diffuse_rejects_shape_mismatch() {
        let s = default_sched();
        let x0 = ImageTensor::zeros(2, 2, 1);
        let z = ImageTensor::zeros(2, 3, 1);
        assert!(forward_diffuse(&x0, 1, &z, &s).is_err());
    }

    #[test]
    fn single_step_pure_noise_limit() {
        // alpha_t = 0 is outside the legal schedule family, so exercise the
        // formula at the smallest representable alpha instead.
        let s = build_schedule(1, ScheduleFamily::Linear, 1.0 - f64::EPSILON, 0.0).unwrap();
        let x = ImageTensor::from_fn(2, 2, 1, |_, _, _| 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = gaussian_like(&x, &mut rng);
        let out = single_step_diffuse(&x, 1, &z, &s).unwrap();
        assert!(out.max_abs_diff(&z) <= 1e-7);
    }

    #[test]
    fn composed_single_steps_match_forward_at_zero_noise() {
        let s = default_sched();
        let x0 = ImageTensor::from_fn(3, 2, 2, |i, j, k| 0.1 * (i as f64) - 0.2 * (j as f64)
            + 0.05 * (k as f64));
        let z = ImageTensor::zeros(3, 2, 2);
        let t = 40;
        let mut x = x0.clone();
        for step in 1..=t {
            x = single_step_diffuse(&x, step, &z, &s).unwrap();
        }
        let direct = forward_diffuse(&x0, t, &z, &s).unwrap();
        assert!(x.max_abs_diff(&direct) <= 1e-12);
    }

    #[test]
    fn composition_variance_matches_marginal() {
        // Statistical check: iterating single steps with fresh noise has the
        // same scalar marginal variance 1 - alpha_bar_t as one forward jump.
        let s = build_schedule(10, ScheduleFamily::Linear, 0.01, 0.2).unwrap();
        let t = 10;
        let trials = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x0 = ImageTensor::zeros(1, 1, 1);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let mut x = x0.clone();
            for step in 1..=t {
                let z = gaussian_like(&x, &mut rng);
                x = single_step_diffuse(&x, step, &z, &s).unwrap();
            }
            let v = x.data()[(0, 0, 0)];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let var = sum_sq / trials as f64 - mean * mean;
        let expect = 1.0 - s.alpha_bar(t).unwrap();
        assert!(
            (var - expect).abs() / expect < 0.05,
            "var {var} vs expected {expect}"
        );
    }

    proptest! {
        #[test]
        fn alpha_bars_strictly_decreasing(
            steps in 2usize..50,
            beta_start in 1e-5f64..0.1,
            beta_spread in 1e-5f64..0.5,
        ) {
            let s = build_schedule(steps, ScheduleFamily::Linear, beta_start,
                (beta_start + beta_spread).min(0.9)).unwrap();
            for t in 2..=steps {
                prop_assert!(s.alpha_bar(t).unwrap() < s.alpha_bar(t - 1).unwrap());
            }
        }

        #[test]
        fn alpha_bar_recurrence_holds(steps in 2usize..40) {
            let s = build_schedule(steps, ScheduleFamily::Linear, 1e-4, 2e-2).unwrap();
            for t in 2..=steps {
                let lhs = s.alpha_bar(t).unwrap();
                let rhs = s.alpha_bar(t - 1).unwrap() * s.alpha(t).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-15);
            }
        }
    }
}
