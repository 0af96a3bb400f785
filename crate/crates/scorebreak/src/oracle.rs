//! Score oracle contract and closed-form Gaussian-mixture oracles.
//!
//! A [`ScoreOracle`] returns the gradient of the log density of the diffused
//! data distribution at a noisy sample. The analytic oracles here compute
//! that gradient exactly for Gaussian-mixture data, which lets every
//! downstream formula (guidance combination, attack steps) be checked
//! without training a network.
//!
//! For a component `N(mu, sigma^2 I)` diffused to step t the marginal is
//! `N(sqrt(ab_t) mu, (ab_t sigma^2 + 1 - ab_t) I)` with `ab_t = alpha_bar_t`,
//! so its score is `(sqrt(ab_t) mu - x_t) / (ab_t sigma^2 + 1 - ab_t)`.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::{condition_channels, ConditionMap, ImageTensor};

/// Anything that returns the (negative-noise) score `s(x_t, c, t)`.
///
/// Implementations must return a tensor with the shape of `x_t` and must
/// accept the unconditional sentinel for `c`.
pub trait ScoreOracle: Send + Sync {
    fn score(&self, x_t: &ImageTensor, c: &ConditionMap, t: usize) -> Result<ImageTensor>;
}

/// One mixture component: a prior weight and a mean image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    #[serde(with = "mean_image_serde")]
    pub mean: Array3<f64>,
}

/// Gaussian mixture over condition classes with shared isotropic variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub components: Vec<GaussianComponent>,
    pub sigma2: f64,
}

mod mean_image_serde {
    use ndarray::Array3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        shape: [usize; 3],
        values: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(a: &Array3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let (h, w, c) = a.dim();
        Repr {
            shape: [h, w, c],
            values: a.iter().copied().collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array3<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        Array3::from_shape_vec((r.shape[0], r.shape[1], r.shape[2]), r.values)
            .map_err(serde::de::Error::custom)
    }
}

impl GaussianMixtureSpec {
    pub fn new(components: Vec<GaussianComponent>, sigma2: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidConfig("mixture needs >= 1 component".into()));
        }
        if sigma2 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mixture variance must be positive, got {sigma2}"
            )));
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| c.weight <= 0.0) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "component weights must be positive and sum to 1 (sum = {wsum})"
            )));
        }
        let shape = components[0].mean.dim();
        if components.iter().any(|c| c.mean.dim() != shape) {
            return Err(Error::InvalidConfig(
                "all component means must share one shape".into(),
            ));
        }
        Ok(Self { components, sigma2 })
    }

    /// Mixture over classes with constant per-channel means; the building
    /// block for synthetic texture data.
    pub fn from_channel_means(
        class_means: &[Vec<f64>],
        weights: &[f64],
        sigma2: f64,
        h: usize,
        w: usize,
    ) -> Result<Self> {
        if class_means.len() != weights.len() {
            return Err(Error::InvalidConfig(
                "class means and weights must have equal length".into(),
            ));
        }
        let components = class_means
            .iter()
            .zip(weights)
            .map(|(means, &weight)| {
                let c = means.len();
                GaussianComponent {
                    weight,
                    mean: Array3::from_shape_fn((h, w, c), |(_, _, ch)| means[ch]),
                }
            })
            .collect();
        Self::new(components, sigma2)
    }

    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    /// (height, width, channels) of the component means.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.components[0].mean.dim()
    }

    /// Variance of a component's diffused marginal at step t.
    pub fn diffused_variance(&self, t: usize, sched: &NoiseSchedule) -> Result<f64> {
        let ab = sched.alpha_bar(t)?;
        Ok(ab * self.sigma2 + 1.0 - ab)
    }

    fn check_class(&self, class_id: usize) -> Result<()> {
        if class_id >= self.components.len() {
            return Err(Error::UnknownClass(class_id));
        }
        Ok(())
    }

    fn check_shape(&self, x_t: &ImageTensor) -> Result<()> {
        if x_t.dim() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.dim()),
                got: format!("{:?}", x_t.dim()),
            });
        }
        Ok(())
    }

    /// Log density of the diffused component `class_id` at `x_t`.
    pub fn log_component_density(
        &self,
        class_id: usize,
        x_t: &ImageTensor,
        t: usize,
        sched: &NoiseSchedule,
    ) -> Result<f64> {
        self.check_class(class_id)?;
        self.check_shape(x_t)?;
        let ab = sched.alpha_bar(t)?;
        let v = self.diffused_variance(t, sched)?;
        let mean = &self.components[class_id].mean;
        let d = x_t.data().len() as f64;
        let sq: f64 = x_t
            .data()
            .iter()
            .zip(mean.iter())
            .map(|(x, m)| {
                let diff = x - ab.sqrt() * m;
                diff * diff
            })
            .sum();
        Ok(-0.5 * (d * (2.0 * std::f64::consts::PI * v).ln() + sq / v))
    }

    /// Log density of the diffused mixture at `x_t` (log-sum-exp over
    /// components).
    pub fn log_marginal_density(
        &self,
        x_t: &ImageTensor,
        t: usize,
        sched: &NoiseSchedule,
    ) -> Result<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .enumerate()
            .map(|(k, comp)| {
                Ok(comp.weight.ln() + self.log_component_density(k, x_t, t, sched)?)
            })
            .collect::<Result<_>>()?;
        Ok(log_sum_exp(&logs))
    }

    /// Log posterior `log p(class | x_t)` of the diffused mixture.
    pub fn log_posterior(
        &self,
        class_id: usize,
        x_t: &ImageTensor,
        t: usize,
        sched: &NoiseSchedule,
    ) -> Result<f64> {
        self.check_class(class_id)?;
        let joint = self.components[class_id].weight.ln()
            + self.log_component_density(class_id, x_t, t, sched)?;
        Ok(joint - self.log_marginal_density(x_t, t, sched)?)
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Exact conditional score of a diffused mixture component:
/// `(sqrt(ab_t) mu_class - x_t) / (ab_t sigma^2 + 1 - ab_t)`.
pub fn analytic_conditional_score(
    spec: &GaussianMixtureSpec,
    x_t: &ImageTensor,
    class_id: usize,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    spec.check_class(class_id)?;
    spec.check_shape(x_t)?;
    let ab = sched.alpha_bar(t)?;
    let v = spec.diffused_variance(t, sched)?;
    let mean = &spec.components[class_id].mean;
    let data = Array3::from_shape_fn(x_t.dim(), |idx| {
        (ab.sqrt() * mean[idx] - x_t.data()[idx]) / v
    });
    Ok(ImageTensor::new(data, x_t.range()))
}

/// Exact marginal score of the diffused mixture: the posterior-weighted sum
/// of component scores, with log-sum-exp stabilized weights.
pub fn analytic_marginal_score(
    spec: &GaussianMixtureSpec,
    x_t: &ImageTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    spec.check_shape(x_t)?;
    let logs: Vec<f64> = spec
        .components
        .iter()
        .enumerate()
        .map(|(k, comp)| Ok(comp.weight.ln() + spec.log_component_density(k, x_t, t, sched)?))
        .collect::<Result<_>>()?;
    let norm = log_sum_exp(&logs);
    let mut out = Array3::zeros(x_t.dim());
    for (k, log_joint) in logs.iter().enumerate() {
        let weight = (log_joint - norm).exp();
        let score_k = analytic_conditional_score(spec, x_t, k, t, sched)?;
        out.zip_mut_with(score_k.data(), |o, &s| *o += weight * s);
    }
    Ok(ImageTensor::new(out, x_t.range()))
}

/// Decode a whole-image class id from a constant condition map.
///
/// Binary (one channel): the constant -0.5 map is class 0, +0.5 is class 1.
/// Multi-class: constant one-hot channels select the +0.5 channel.
pub fn decode_class_condition(c: &ConditionMap, num_classes: usize) -> Result<usize> {
    let values = match c {
        ConditionMap::Unconditional { .. } => {
            return Err(Error::InvalidCondition(
                "sentinel has no class id".into(),
            ))
        }
        ConditionMap::Conditional(v) => v,
    };
    let (_, _, k) = values.dim();
    if k != condition_channels(num_classes) {
        return Err(Error::InvalidCondition(format!(
            "expected {} condition channels for {} classes, got {k}",
            condition_channels(num_classes),
            num_classes
        )));
    }
    let first: Vec<f64> = (0..k).map(|ch| values[(0, 0, ch)]).collect();
    for ((_, _, ch), &v) in values.indexed_iter() {
        if v != first[ch] {
            return Err(Error::InvalidCondition(
                "class condition must be a constant map".into(),
            ));
        }
    }
    if k == 1 {
        match first[0] {
            v if v == 0.5 => Ok(1),
            v if v == -0.5 => Ok(0),
            v => Err(Error::InvalidCondition(format!(
                "binary class condition must be ±0.5, got {v}"
            ))),
        }
    } else {
        let hot: Vec<usize> = (0..k).filter(|&ch| first[ch] == 0.5).collect();
        match hot.as_slice() {
            [class] if first.iter().enumerate().all(|(ch, &v)| {
                v == if ch == *class { 0.5 } else { -0.5 }
            }) =>
            {
                Ok(*class)
            }
            _ => Err(Error::InvalidCondition(
                "multi-class condition must be a ±0.5 one-hot".into(),
            )),
        }
    }
}

/// Encode a whole-image class id as a constant condition map.
pub fn encode_class_condition(class_id: usize, num_classes: usize, h: usize, w: usize) -> ConditionMap {
    let k = condition_channels(num_classes);
    let values = Array3::from_shape_fn((h, w, k), |(_, _, ch)| {
        let hot = if k == 1 { class_id == 1 } else { ch == class_id };
        if hot {
            0.5
        } else {
            -0.5
        }
    });
    ConditionMap::Conditional(values)
}

/// Analytic oracle over whole-image mixture classes.
///
/// Conditioning on a class (encoded as a constant condition map) yields the
/// component score; the sentinel yields the mixture's marginal score.
#[derive(Debug, Clone)]
pub struct MixtureOracle {
    spec: GaussianMixtureSpec,
    sched: NoiseSchedule,
}

impl MixtureOracle {
    pub fn new(spec: GaussianMixtureSpec, sched: NoiseSchedule) -> Self {
        Self { spec, sched }
    }

    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }
}

impl ScoreOracle for MixtureOracle {
    fn score(&self, x_t: &ImageTensor, c: &ConditionMap, t: usize) -> Result<ImageTensor> {
        if c.is_unconditional() {
            analytic_marginal_score(&self.spec, x_t, t, &self.sched)
        } else {
            let class_id = decode_class_condition(c, self.spec.num_classes())?;
            analytic_conditional_score(&self.spec, x_t, class_id, t, &self.sched)
        }
    }
}

/// Analytic oracle for per-pixel class fields (segmentation textures).
///
/// The data model factorizes over pixels: each pixel carries its own class,
/// its channel vector is Gaussian around that class's mean-image value.
/// Conditioning on a mask selects the per-pixel component; the sentinel
/// yields the per-pixel mixture score.
#[derive(Debug, Clone)]
pub struct PixelwiseMixtureOracle {
    spec: GaussianMixtureSpec,
    sched: NoiseSchedule,
}

impl PixelwiseMixtureOracle {
    pub fn new(spec: GaussianMixtureSpec, sched: NoiseSchedule) -> Self {
        Self { spec, sched }
    }

    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }

    /// Per-pixel class ids decoded from a normalized condition map.
    fn decode_mask(&self, c: &ConditionMap) -> Result<Vec<usize>> {
        let values = c.values();
        let (h, w, k) = values.dim();
        if k != condition_channels(self.spec.num_classes()) {
            return Err(Error::InvalidCondition(format!(
                "expected {} condition channels, got {k}",
                condition_channels(self.spec.num_classes())
            )));
        }
        let mut classes = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let class = if k == 1 {
                    usize::from(values[(i, j, 0)] >= 0.0)
                } else {
                    (0..k)
                        .max_by(|&a, &b| {
                            values[(i, j, a)].partial_cmp(&values[(i, j, b)]).unwrap()
                        })
                        .unwrap()
                };
                classes.push(class);
            }
        }
        Ok(classes)
    }
}

impl ScoreOracle for PixelwiseMixtureOracle {
    fn score(&self, x_t: &ImageTensor, c: &ConditionMap, t: usize) -> Result<ImageTensor> {
        let (h, w, ch) = x_t.dim();
        let (sh, sw, sc) = self.spec.dim();
        if (h, w, ch) != (sh, sw, sc) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", (sh, sw, sc)),
                got: format!("{:?}", (h, w, ch)),
            });
        }
        let ab = self.sched.alpha_bar(t)?;
        let v = self.spec.diffused_variance(t, &self.sched)?;
        let mut out = Array3::zeros((h, w, ch));

        if c.is_unconditional() {
            // Per-pixel mixture posterior over classes from the pixel's
            // channel vector.
            for i in 0..h {
                for j in 0..w {
                    let logs: Vec<f64> = self
                        .spec
                        .components
                        .iter()
                        .map(|comp| {
                            let sq: f64 = (0..ch)
                                .map(|cc| {
                                    let diff =
                                        x_t.data()[(i, j, cc)] - ab.sqrt() * comp.mean[(i, j, cc)];
                                    diff * diff
                                })
                                .sum();
                            comp.weight.ln() - 0.5 * sq / v
                        })
                        .collect();
                    let norm = log_sum_exp(&logs);
                    for cc in 0..ch {
                        let mut s = 0.0;
                        for (k, comp) in self.spec.components.iter().enumerate() {
                            let post = (logs[k] - norm).exp();
                            s += post * (ab.sqrt() * comp.mean[(i, j, cc)] - x_t.data()[(i, j, cc)])
                                / v;
                        }
                        out[(i, j, cc)] = s;
                    }
                }
            }
        } else {
            let classes = self.decode_mask(c)?;
            for i in 0..h {
                for j in 0..w {
                    let comp = &self.spec.components[classes[i * w + j]];
                    for cc in 0..ch {
                        out[(i, j, cc)] = (ab.sqrt() * comp.mean[(i, j, cc)]
                            - x_t.data()[(i, j, cc)])
                            / v;
                    }
                }
            }
        }
        Ok(ImageTensor::new(out, x_t.range()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{build_schedule, ScheduleFamily, ScheduleSpec};
    use crate::tensor::MaskTensor;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sched() -> NoiseSchedule {
        ScheduleSpec::default().build().unwrap()
    }

    fn random_spec(
        rng: &mut ChaCha8Rng,
        classes: usize,
        h: usize,
        w: usize,
        c: usize,
    ) -> GaussianMixtureSpec {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let components = (0..classes)
            .map(|k| GaussianComponent {
                weight: raw[k] / total,
                mean: Array3::from_shape_simple_fn((h, w, c), || rng.random_range(-0.6..0.6)),
            })
            .collect();
        GaussianMixtureSpec::new(components, rng.random_range(0.05..0.5)).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageTensor {
        ImageTensor::new(
            Array3::from_shape_simple_fn((h, w, c), || rng.random_range(-1.0..1.0)),
            crate::tensor::ValueRange::UNIT,
        )
    }

    /// Central difference of a scalar field over image pixels.
    fn finite_diff_grad(
        f: &dyn Fn(&ImageTensor) -> f64,
        x: &ImageTensor,
        step: f64,
    ) -> ImageTensor {
        let mut out = x.clone();
        let idxs: Vec<_> = x.data().indexed_iter().map(|(i, _)| i).collect();
        for idx in idxs {
            let mut plus = x.clone();
            plus.data_mut()[idx] += step;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= step;
            out.data_mut()[idx] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        out
    }

    #[test]
    fn conditional_score_vanishes_at_scaled_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = random_spec(&mut rng, 2, 2, 2, 1);
        let s = sched();
        let t = 400;
        let ab = s.alpha_bar(t).unwrap();
        let x = ImageTensor::new(spec.components[1].mean.mapv(|m| ab.sqrt() * m), Default::default());
        let score = analytic_conditional_score(&spec, &x, 1, t, &s).unwrap();
        assert!(score.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn unit_variance_collapses_denominator() {
        let comp = GaussianComponent {
            weight: 1.0,
            mean: array![[[0.3]]],
        };
        let spec = GaussianMixtureSpec::new(vec![comp], 1.0).unwrap();
        let s = sched();
        let t = 250;
        let ab = s.alpha_bar(t).unwrap();
        let x = ImageTensor::from_fn(1, 1, 1, |_, _, _| -0.2);
        let score = analytic_conditional_score(&spec, &x, 0, t, &s).unwrap();
        let expect = ab.sqrt() * 0.3 + 0.2;
        assert!((score.data()[(0, 0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn conditional_score_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sched();
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 3, 1, 2, 1);
            let x = random_image(&mut rng, 1, 2, 1);
            let t = rng.random_range(1..=1000);
            let score = analytic_conditional_score(&spec, &x, 0, t, &s).unwrap();
            let fd = finite_diff_grad(
                &|p| spec.log_component_density(0, p, t, &s).unwrap(),
                &x,
                1e-4,
            );
            assert!(score.max_abs_diff(&fd) <= 1e-5);
        }
    }

    #[test]
    fn marginal_of_single_component_equals_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&mut rng, 1, 2, 2, 2);
        let s = sched();
        let x = random_image(&mut rng, 2, 2, 2);
        let cond = analytic_conditional_score(&spec, &x, 0, 123, &s).unwrap();
        let marg = analytic_marginal_score(&spec, &x, 123, &s).unwrap();
        assert!(cond.max_abs_diff(&marg) <= 1e-14);
    }

    #[test]
    fn symmetric_two_component_midpoint_score_is_zero() {
        let c0 = GaussianComponent {
            weight: 0.5,
            mean: array![[[-0.4]]],
        };
        let c1 = GaussianComponent {
            weight: 0.5,
            mean: array![[[0.4]]],
        };
        let spec = GaussianMixtureSpec::new(vec![c0, c1], 0.2).unwrap();
        let s = sched();
        let x = ImageTensor::zeros(1, 1, 1);
        let score = analytic_marginal_score(&spec, &x, 77, &s).unwrap();
        assert!(score.data()[(0, 0, 0)].abs() < 1e-12);
    }

    #[test]
    fn marginal_score_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sched();
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 3, 1, 1, 1);
            let x = random_image(&mut rng, 1, 1, 1);
            let t = rng.random_range(1..=1000);
            let score = analytic_marginal_score(&spec, &x, t, &s).unwrap();
            let fd = finite_diff_grad(&|p| spec.log_marginal_density(p, t, &s).unwrap(), &x, 1e-4);
            assert!(score.max_abs_diff(&fd) <= 1e-5);
        }
    }

    #[test]
    fn marginal_score_field_is_conservative() {
        // Cross-partials of a gradient field agree on small instances.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = sched();
        let spec = random_spec(&mut rng, 2, 2, 2, 1);
        let x = random_image(&mut rng, 2, 2, 1);
        let t = 321;
        let step = 1e-4;
        let score_at = |p: &ImageTensor| analytic_marginal_score(&spec, p, t, &s).unwrap();
        let idxs: Vec<_> = x.data().indexed_iter().map(|(i, _)| i).collect();
        for &i in &idxs {
            for &j in &idxs {
                let mut pj = x.clone();
                pj.data_mut()[j] += step;
                let mut mj = x.clone();
                mj.data_mut()[j] -= step;
                let dsi_dxj = (score_at(&pj).data()[i] - score_at(&mj).data()[i]) / (2.0 * step);
                let mut pi = x.clone();
                pi.data_mut()[i] += step;
                let mut mi = x.clone();
                mi.data_mut()[i] -= step;
                let dsj_dxi = (score_at(&pi).data()[j] - score_at(&mi).data()[j]) / (2.0 * step);
                assert!(
                    (dsi_dxj - dsj_dxi).abs() <= 1e-4,
                    "cross-partials differ: {dsi_dxj} vs {dsj_dxi}"
                );
            }
        }
    }

    #[test]
    fn oracle_rejects_unknown_class_and_accepts_sentinel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = random_spec(&mut rng, 2, 2, 2, 1);
        let s = sched();
        let x = random_image(&mut rng, 2, 2, 1);
        assert!(analytic_conditional_score(&spec, &x, 5, 10, &s).is_err());
        let oracle = MixtureOracle::new(spec, s);
        let out = oracle
            .score(&x, &ConditionMap::unconditional(2, 2, 1), 10)
            .unwrap();
        assert_eq!(out.dim(), x.dim());
        assert!(out.is_finite());
    }

    #[test]
    fn class_condition_round_trips() {
        for classes in [2usize, 3, 4] {
            for class in 0..classes {
                let c = encode_class_condition(class, classes, 3, 2);
                assert_eq!(decode_class_condition(&c, classes).unwrap(), class);
            }
        }
    }

    #[test]
    fn pixelwise_conditional_matches_mask_selection() {
        let s = build_schedule(50, ScheduleFamily::Linear, 1e-3, 5e-2).unwrap();
        let spec = GaussianMixtureSpec::from_channel_means(
            &[vec![-0.4], vec![0.4]],
            &[0.5, 0.5],
            0.1,
            2,
            2,
        )
        .unwrap();
        let oracle = PixelwiseMixtureOracle::new(spec.clone(), s.clone());
        let mask = MaskTensor::new(array![[0u8, 1], [1, 0]], 2).unwrap();
        let x = ImageTensor::zeros(2, 2, 1);
        let t = 5;
        let out = oracle.score(&x, &mask.to_condition(), t).unwrap();
        let ab = s.alpha_bar(t).unwrap();
        let v = spec.diffused_variance(t, &s).unwrap();
        assert!((out.data()[(0, 0, 0)] - (ab.sqrt() * -0.4) / v).abs() < 1e-12);
        assert!((out.data()[(0, 1, 0)] - (ab.sqrt() * 0.4) / v).abs() < 1e-12);
    }

    #[test]
    fn spec_serializes_through_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = random_spec(&mut rng, 2, 2, 2, 1);
        let text = serde_json::to_string(&spec).unwrap();
        let back: GaussianMixtureSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}

