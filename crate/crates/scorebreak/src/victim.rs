//! Toy victim segmenters: trained neural models used to measure attack
//! damage and transferability, plus the closed-form Bayes classifier over a
//! Gaussian-mixture spec.
//!
//! Victims are read-only at attack time; `predict` is safe for concurrent
//! callers.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Container, ContainerHeader};
use crate::error::{Error, Result};
use crate::metrics;
use crate::nn::{Adam, CondUnet, DilatedNet, Feat, Grads};
use crate::oracle::GaussianMixtureSpec;
use crate::scorenet::{feat_to_image, image_to_feat};
use crate::tensor::{ImageTensor, MaskTensor};

/// Per-pixel class probabilities, H×W×K (K = 1 for binary tasks).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPrediction {
    probs: Array3<f64>,
}

impl MaskPrediction {
    pub fn new(probs: Array3<f64>) -> Result<Self> {
        if let Some(&v) = probs.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "prediction probability {v} outside [0, 1]"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array3<f64> {
        &self.probs
    }

    /// (height, width, channels)
    pub fn dim(&self) -> (usize, usize, usize) {
        self.probs.dim()
    }

    /// Foreground probability map for binary predictions.
    pub fn binary_prob(&self) -> Result<Array2<f64>> {
        let (h, w, k) = self.probs.dim();
        match k {
            1 => Ok(Array2::from_shape_fn((h, w), |(i, j)| self.probs[(i, j, 0)])),
            2 => Ok(Array2::from_shape_fn((h, w), |(i, j)| self.probs[(i, j, 1)])),
            _ => Err(Error::InvalidConfig(format!(
                "binary probability undefined for {k} channels"
            ))),
        }
    }

    /// Hard class map: threshold at 0.5 for one channel, argmax otherwise.
    pub fn class_map(&self) -> Array2<u8> {
        let (h, w, k) = self.probs.dim();
        Array2::from_shape_fn((h, w), |(i, j)| {
            if k == 1 {
                u8::from(self.probs[(i, j, 0)] >= 0.5)
            } else {
                (0..k)
                    .max_by(|&a, &b| {
                        self.probs[(i, j, a)]
                            .partial_cmp(&self.probs[(i, j, b)])
                            .unwrap()
                    })
                    .unwrap() as u8
            }
        })
    }
}

/// A gradient-inaccessible victim: predictions only.
pub trait QueryTarget: Send + Sync {
    fn predict(&self, x: &ImageTensor) -> Result<MaskPrediction>;
}

/// A gradient-accessible victim: task loss and its input gradient, for the
/// white-box baselines.
pub trait LossGradient: Send + Sync {
    fn loss_and_grad(&self, x: &ImageTensor, y: &MaskTensor) -> Result<(f64, ImageTensor)>;
}

/// Query loss against the ground truth: binary cross-entropy for binary
/// masks, per-pixel cross-entropy for multi-class.
pub fn query_loss(pred: &MaskPrediction, y: &MaskTensor) -> Result<f64> {
    let (h, w, k) = pred.dim();
    if (h, w) != y.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", y.dim()),
            got: format!("{:?}", (h, w)),
        });
    }
    let clamp = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let mut total = 0.0;
    if k == 1 {
        for ((i, j), &label) in y.labels().indexed_iter() {
            let p = clamp(pred.probs()[(i, j, 0)]);
            let t = f64::from(label != 0);
            total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
    } else {
        if y.num_classes() > k {
            return Err(Error::InvalidCondition(format!(
                "mask has {} classes but prediction has {k} channels",
                y.num_classes()
            )));
        }
        for ((i, j), &label) in y.labels().indexed_iter() {
            total -= clamp(pred.probs()[(i, j, label as usize)]).ln();
        }
    }
    Ok(total / (h * w) as f64)
}

/// Registered toy victim families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VictimArch {
    MiniUnet,
    Dilated,
}

impl VictimArch {
    pub fn as_str(&self) -> &'static str {
        match self {
            VictimArch::MiniUnet => "mini-unet",
            VictimArch::Dilated => "dilated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimSpec {
    pub arch: VictimArch,
    /// Dataset split the victim trains on; must stay disjoint from the score
    /// model's split.
    pub split_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VictimHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub base_width: usize,
    /// Clean-mIoU gate on the validation split; victims below it are flagged
    /// and experiments refuse to use them.
    pub gate_miou: f64,
}

impl Default for VictimHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 8,
            max_steps: 300,
            base_width: 8,
            gate_miou: 0.80,
        }
    }
}

#[derive(Debug, Clone)]
enum VictimNet {
    Unet(CondUnet),
    Dilated(DilatedNet),
}

impl VictimNet {
    fn forward(&self, x: &Feat) -> Feat {
        match self {
            VictimNet::Unet(n) => n.forward(x, None),
            VictimNet::Dilated(n) => n.forward(x),
        }
    }
}

/// A trained (or untrained) neural victim. Logits pass through a sigmoid for
/// binary tasks and a softmax otherwise.
#[derive(Debug, Clone)]
pub struct NeuralVictim {
    pub arch: VictimArch,
    pub image_channels: usize,
    pub num_classes: usize,
    pub base_width: usize,
    net: VictimNet,
}

impl NeuralVictim {
    pub fn new(
        arch: VictimArch,
        image_channels: usize,
        num_classes: usize,
        base_width: usize,
        seed: u64,
    ) -> Self {
        let out_channels = logit_channels(num_classes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = match arch {
            VictimArch::MiniUnet => VictimNet::Unet(CondUnet::new(
                image_channels,
                out_channels,
                base_width,
                None,
                &mut rng,
            )),
            VictimArch::Dilated => VictimNet::Dilated(DilatedNet::new(
                image_channels,
                out_channels,
                base_width,
                &mut rng,
            )),
        };
        Self {
            arch,
            image_channels,
            num_classes,
            base_width,
            net,
        }
    }

    fn logits(&self, x: &ImageTensor) -> Result<Feat> {
        let (_, _, c) = x.dim();
        if c != self.image_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} channels", self.image_channels),
                got: format!("{c} channels"),
            });
        }
        Ok(self.net.forward(&image_to_feat(x)))
    }

    fn probs_from_logits(&self, logits: &Feat) -> Array3<f64> {
        let (k, h, w) = logits.dim();
        if k == 1 {
            Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
                1.0 / (1.0 + (-(logits[(0, i, j)] as f64)).exp())
            })
        } else {
            let mut out = Array3::zeros((h, w, k));
            for i in 0..h {
                for j in 0..w {
                    let max = (0..k)
                        .map(|c| logits[(c, i, j)])
                        .fold(f32::NEG_INFINITY, f32::max) as f64;
                    let mut z = 0.0;
                    for c in 0..k {
                        let e = ((logits[(c, i, j)] as f64) - max).exp();
                        out[(i, j, c)] = e;
                        z += e;
                    }
                    for c in 0..k {
                        out[(i, j, c)] /= z;
                    }
                }
            }
            out
        }
    }

    fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        match &self.net {
            VictimNet::Unet(n) => n.named_tensors(),
            VictimNet::Dilated(n) => n.named_tensors(),
        }
    }

    fn load_named(&mut self, tensors: &BTreeMap<String, (Vec<usize>, Vec<f32>)>) -> Result<()> {
        match &mut self.net {
            VictimNet::Unet(n) => n.load_named(tensors),
            VictimNet::Dilated(n) => n.load_named(tensors),
        }
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        match &mut self.net {
            VictimNet::Unet(n) => n.param_slices_mut(),
            VictimNet::Dilated(n) => n.param_slices_mut(),
        }
    }

    pub fn param_snapshot(&self) -> Vec<f32> {
        self.named_tensors()
            .into_iter()
            .flat_map(|(_, _, d)| d)
            .collect()
    }

    /// Cross-entropy loss and the gradient of the logits, shared by training
    /// and the white-box attack path.
    fn loss_and_logit_grad(&self, logits: &Feat, y: &MaskTensor) -> (f64, Feat) {
        let (k, h, w) = logits.dim();
        let n = (h * w) as f64;
        let mut grad = Feat::zeros((k, h, w));
        let mut loss = 0.0;
        if k == 1 {
            for ((i, j), &label) in y.labels().indexed_iter() {
                let l = logits[(0, i, j)] as f64;
                let t = f64::from(label != 0);
                // Numerically stable BCE-with-logits.
                loss += l.max(0.0) - l * t + (1.0 + (-l.abs()).exp()).ln();
                let sig = 1.0 / (1.0 + (-l).exp());
                grad[(0, i, j)] = ((sig - t) / n) as f32;
            }
        } else {
            for ((i, j), &label) in y.labels().indexed_iter() {
                let max = (0..k)
                    .map(|c| logits[(c, i, j)])
                    .fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut z = 0.0;
                for c in 0..k {
                    z += ((logits[(c, i, j)] as f64) - max).exp();
                }
                let log_z = max + z.ln();
                loss += log_z - logits[(label as usize, i, j)] as f64;
                for c in 0..k {
                    let p = ((logits[(c, i, j)] as f64) - log_z).exp();
                    let t = f64::from(c == label as usize);
                    grad[(c, i, j)] = ((p - t) / n) as f32;
                }
            }
        }
        (loss / n, grad)
    }
}

fn logit_channels(num_classes: usize) -> usize {
    if num_classes == 2 {
        1
    } else {
        num_classes
    }
}

impl QueryTarget for NeuralVictim {
    fn predict(&self, x: &ImageTensor) -> Result<MaskPrediction> {
        let logits = self.logits(x)?;
        MaskPrediction::new(self.probs_from_logits(&logits))
    }
}

impl LossGradient for NeuralVictim {
    fn loss_and_grad(&self, x: &ImageTensor, y: &MaskTensor) -> Result<(f64, ImageTensor)> {
        let input = image_to_feat(x);
        let (loss, grad_feat) = match &self.net {
            VictimNet::Unet(n) => {
                let (logits, cache) = n.forward_train(&input, None);
                let (loss, glogits) = self.loss_and_logit_grad(&logits, y);
                let (_, gx) = n.backward(&cache, &glogits);
                (loss, gx)
            }
            VictimNet::Dilated(n) => {
                let (logits, cache) = n.forward_train(&input);
                let (loss, glogits) = self.loss_and_logit_grad(&logits, y);
                let (_, gx) = n.backward(&cache, &glogits);
                (loss, gx)
            }
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite("victim loss"));
        }
        Ok((loss, feat_to_image(&grad_feat, x.range())))
    }
}

/// Outcome of victim training: the model, its clean validation mIoU and
/// whether it cleared the gate.
pub struct TrainedVictim {
    pub spec: VictimSpec,
    pub victim: NeuralVictim,
    pub clean_miou: f64,
    pub gate_passed: bool,
    pub hyperparams: VictimHyperparams,
}

/// Clean mIoU of a victim over a split.
pub fn evaluate_miou(
    victim: &dyn QueryTarget,
    data: &[(ImageTensor, MaskTensor)],
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty evaluation split".into()));
    }
    let scores: Vec<f64> = data
        .par_iter()
        .map(|(img, mask)| {
            let pred = victim.predict(img)?;
            let (miou, _) = metrics::miou_acc(
                &pred.class_map(),
                mask.labels(),
                mask.num_classes().max(2),
            )?;
            Ok(miou)
        })
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Train a victim with per-pixel cross-entropy and gate it on clean mIoU.
pub fn train_victim(
    spec: &VictimSpec,
    train: &[(ImageTensor, MaskTensor)],
    val: &[(ImageTensor, MaskTensor)],
    hp: &VictimHyperparams,
) -> Result<TrainedVictim> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidConfig(
            "victim training needs nonempty train and val splits".into(),
        ));
    }
    let (_, _, channels) = train[0].0.dim();
    let num_classes = train[0].1.num_classes();
    let mut victim = NeuralVictim::new(spec.arch, channels, num_classes, hp.base_width, spec.seed);
    let mut opt = Adam::new(hp.learning_rate as f32);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = train.len();
    for _ in 0..hp.max_steps {
        let mut batch_idx = Vec::with_capacity(hp.batch_size);
        for _ in 0..hp.batch_size {
            if cursor >= order.len() {
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                cursor = 0;
            }
            batch_idx.push(order[cursor]);
            cursor += 1;
        }
        let grads: Vec<Grads> = batch_idx
            .par_iter()
            .map(|&idx| {
                let (img, mask) = &train[idx];
                let input = image_to_feat(img);
                match &victim.net {
                    VictimNet::Unet(n) => {
                        let (logits, cache) = n.forward_train(&input, None);
                        let (_, mut glogits) = victim.loss_and_logit_grad(&logits, mask);
                        glogits.mapv_inplace(|v| v / batch_idx.len() as f32);
                        n.backward(&cache, &glogits).0
                    }
                    VictimNet::Dilated(n) => {
                        let (logits, cache) = n.forward_train(&input);
                        let (_, mut glogits) = victim.loss_and_logit_grad(&logits, mask);
                        glogits.mapv_inplace(|v| v / batch_idx.len() as f32);
                        n.backward(&cache, &glogits).0
                    }
                }
            })
            .collect();
        let mut summed = grads[0].clone();
        for g in &grads[1..] {
            summed.add_assign(g);
        }
        opt.step(victim.param_slices_mut(), &summed);
    }

    let clean_miou = evaluate_miou(&victim, val)?;
    Ok(TrainedVictim {
        spec: spec.clone(),
        gate_passed: clean_miou >= hp.gate_miou,
        victim,
        clean_miou,
        hyperparams: hp.clone(),
    })
}

/// Closed-form per-pixel Bayes classifier over a Gaussian-mixture spec.
#[derive(Debug, Clone)]
pub struct BayesVictim {
    spec: GaussianMixtureSpec,
}

/// Per-pixel posterior victim from the mixture's mean images.
pub fn bayes_victim(spec: &GaussianMixtureSpec) -> BayesVictim {
    BayesVictim { spec: spec.clone() }
}

impl BayesVictim {
    /// Sum over pixels of `log p(class_i | x_i)` for the mask's classes.
    pub fn posterior_log_likelihood(&self, x: &ImageTensor, y: &MaskTensor) -> Result<f64> {
        let pred = self.predict(x)?;
        let (_, _, k) = pred.dim();
        let mut total = 0.0;
        for ((i, j), &label) in y.labels().indexed_iter() {
            let p = if k == 1 {
                let p1 = pred.probs()[(i, j, 0)];
                if label != 0 {
                    p1
                } else {
                    1.0 - p1
                }
            } else {
                pred.probs()[(i, j, label as usize)]
            };
            total += p.max(1e-300).ln();
        }
        Ok(total)
    }
}

impl QueryTarget for BayesVictim {
    fn predict(&self, x: &ImageTensor) -> Result<MaskPrediction> {
        let (h, w, c) = x.dim();
        let (sh, sw, sc) = self.spec.dim();
        if (h, w, c) != (sh, sw, sc) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", (sh, sw, sc)),
                got: format!("{:?}", (h, w, c)),
            });
        }
        let classes = self.spec.num_classes();
        let k_out = logit_channels(classes.max(2));
        let mut out = Array3::zeros((h, w, k_out));
        for i in 0..h {
            for j in 0..w {
                let logs: Vec<f64> = self
                    .spec
                    .components
                    .iter()
                    .map(|comp| {
                        let sq: f64 = (0..c)
                            .map(|ch| {
                                let d = x.data()[(i, j, ch)] - comp.mean[(i, j, ch)];
                                d * d
                            })
                            .sum();
                        comp.weight.ln() - 0.5 * sq / self.spec.sigma2
                    })
                    .collect();
                let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
                if k_out == 1 {
                    out[(i, j, 0)] = (logs[1] - max).exp() / z;
                } else {
                    for (cls, l) in logs.iter().enumerate() {
                        out[(i, j, cls)] = (l - max).exp() / z;
                    }
                }
            }
        }
        MaskPrediction::new(out)
    }
}

/// Header config persisted with victim checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VictimCheckpointConfig {
    pub spec: VictimSpec,
    pub image_channels: usize,
    pub num_classes: usize,
    pub hyperparams: VictimHyperparams,
    pub clean_miou: f64,
    pub gate_passed: bool,
}

impl TrainedVictim {
    pub fn save(&self, path: &Path) -> Result<()> {
        Container {
            header: ContainerHeader {
                kind: "victim".into(),
                config: VictimCheckpointConfig {
                    spec: self.spec.clone(),
                    image_channels: self.victim.image_channels,
                    num_classes: self.victim.num_classes,
                    hyperparams: self.hyperparams.clone(),
                    clean_miou: self.clean_miou,
                    gate_passed: self.gate_passed,
                },
                train_steps: self.hyperparams.max_steps as u64,
                final_loss: None,
            },
            tensors: self
                .victim
                .named_tensors()
                .into_iter()
                .map(|(n, s, d)| (n, (s, d)))
                .collect(),
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Container<VictimCheckpointConfig> = Container::load(path)?;
        if c.header.kind != "victim" {
            return Err(Error::Checkpoint(format!(
                "expected a victim checkpoint, found `{}`",
                c.header.kind
            )));
        }
        let cfg = c.header.config;
        let mut victim = NeuralVictim::new(
            cfg.spec.arch,
            cfg.image_channels,
            cfg.num_classes,
            cfg.hyperparams.base_width,
            cfg.spec.seed,
        );
        victim.load_named(&c.tensors)?;
        Ok(Self {
            spec: cfg.spec,
            victim,
            clean_miou: cfg.clean_miou,
            gate_passed: cfg.gate_passed,
            hyperparams: cfg.hyperparams,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::gaussian_like;
    use ndarray::array;

    /// Half-plane masks with class-dependent channel means; a stand-in for
    /// the synthetic corpus.
    fn toy_split(
        rng: &mut ChaCha8Rng,
        n: usize,
        hw: usize,
        sep: f64,
    ) -> Vec<(ImageTensor, MaskTensor)> {
        (0..n)
            .map(|_| {
                let flip = rng.random::<bool>();
                let offset = rng.random_range(-2i64..=2);
                let labels = Array2::from_shape_fn((hw, hw), |(i, j)| {
                    let fg = (i as i64 + j as i64 + offset) > hw as i64;
                    u8::from(fg != flip)
                });
                let mask = MaskTensor::new(labels, 2).unwrap();
                let noise = gaussian_like(&ImageTensor::zeros(hw, hw, 1), rng);
                let img = ImageTensor::from_fn(hw, hw, 1, |i, j, _| {
                    let m = if mask.labels()[(i, j)] != 0 { sep } else { -sep };
                    (m + 0.25 * noise.data()[(i, j, 0)]).clamp(-1.0, 1.0)
                });
                (img, mask)
            })
            .collect()
    }

    fn pixel_spec(sep: f64, sigma2: f64, h: usize, w: usize) -> GaussianMixtureSpec {
        GaussianMixtureSpec::from_channel_means(
            &[vec![-sep], vec![sep]],
            &[0.5, 0.5],
            sigma2,
            h,
            w,
        )
        .unwrap()
    }

    #[test]
    fn bayes_victim_confident_at_class_mean() {
        let spec = pixel_spec(0.4, 0.01, 2, 2);
        let victim = bayes_victim(&spec);
        let x = ImageTensor::from_fn(2, 2, 1, |_, _, _| 0.4);
        let pred = victim.predict(&x).unwrap();
        assert!(pred.probs().iter().all(|&p| p >= 0.99));
    }

    #[test]
    fn bayes_victim_uncertain_at_midpoint() {
        let spec = pixel_spec(0.4, 0.05, 1, 1);
        let victim = bayes_victim(&spec);
        let x = ImageTensor::zeros(1, 1, 1);
        let pred = victim.predict(&x).unwrap();
        assert!((pred.probs()[(0, 0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bayes_posteriors_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = GaussianMixtureSpec::from_channel_means(
            &[vec![-0.3], vec![0.0], vec![0.3]],
            &[0.2, 0.5, 0.3],
            0.1,
            3,
            3,
        )
        .unwrap();
        let victim = bayes_victim(&spec);
        let x = gaussian_like(&ImageTensor::zeros(3, 3, 1), &mut rng);
        let pred = victim.predict(&x).unwrap();
        let (h, w, k) = pred.dim();
        assert_eq!(k, 3);
        for i in 0..h {
            for j in 0..w {
                let total: f64 = (0..k).map(|c| pred.probs()[(i, j, c)]).sum();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn untrained_victim_predicts_valid_probabilities_on_zeros() {
        let victim = NeuralVictim::new(VictimArch::MiniUnet, 1, 2, 4, 3);
        let x = ImageTensor::zeros(8, 8, 1);
        let pred = victim.predict(&x).unwrap();
        assert_eq!(pred.dim(), (8, 8, 1));
        assert!(pred.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn victims_train_past_the_gate_with_distinct_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = toy_split(&mut rng, 24, 8, 0.5);
        let val = toy_split(&mut rng, 8, 8, 0.5);
        let hp = VictimHyperparams {
            max_steps: 120,
            base_width: 4,
            ..Default::default()
        };
        let mut mious = Vec::new();
        let mut snapshots = Vec::new();
        for seed in [1u64, 2] {
            let spec = VictimSpec {
                arch: VictimArch::MiniUnet,
                split_id: "victim-train".into(),
                seed,
            };
            let trained = train_victim(&spec, &train, &val, &hp).unwrap();
            assert!(
                trained.gate_passed,
                "seed {seed} failed gate: mIoU {}",
                trained.clean_miou
            );
            mious.push(trained.clean_miou);
            snapshots.push(trained.victim.param_snapshot());
        }
        assert_ne!(snapshots[0], snapshots[1], "seeds produced equal weights");
        // Sanity: train-split mIoU is at least as good as validation.
        let spec = VictimSpec {
            arch: VictimArch::MiniUnet,
            split_id: "victim-train".into(),
            seed: 1,
        };
        let trained = train_victim(&spec, &train, &val, &hp).unwrap();
        let train_miou = evaluate_miou(&trained.victim, &train).unwrap();
        assert!(train_miou + 1e-6 >= trained.clean_miou - 0.05);
    }

    #[test]
    fn dilated_victim_trains_too() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = toy_split(&mut rng, 24, 8, 0.5);
        let val = toy_split(&mut rng, 8, 8, 0.5);
        let spec = VictimSpec {
            arch: VictimArch::Dilated,
            split_id: "victim-train".into(),
            seed: 4,
        };
        let hp = VictimHyperparams {
            max_steps: 150,
            base_width: 6,
            ..Default::default()
        };
        let trained = train_victim(&spec, &train, &val, &hp).unwrap();
        assert!(
            trained.gate_passed,
            "dilated failed gate: mIoU {}",
            trained.clean_miou
        );
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let victim = NeuralVictim::new(VictimArch::Dilated, 1, 2, 4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian_like(&ImageTensor::zeros(8, 8, 1), &mut rng).map(|v| 0.4 * v);
        let mask = MaskTensor::new(
            Array2::from_shape_fn((8, 8), |(i, _)| u8::from(i >= 4)),
            2,
        )
        .unwrap();
        let (loss, grad) = victim.loss_and_grad(&x, &mask).unwrap();
        assert!(loss > 0.0);
        for (i, j) in [(0usize, 0usize), (3, 5), (7, 7)] {
            let step = 1e-3;
            let mut plus = x.clone();
            plus.data_mut()[(i, j, 0)] += step;
            let mut minus = x.clone();
            minus.data_mut()[(i, j, 0)] -= step;
            let fd = (victim.loss_and_grad(&plus, &mask).unwrap().0
                - victim.loss_and_grad(&minus, &mask).unwrap().0)
                / (2.0 * step);
            let got = grad.data()[(i, j, 0)];
            let denom = fd.abs().max(got.abs()).max(1e-4);
            assert!((fd - got).abs() / denom < 5e-2, "({i},{j}): {fd} vs {got}");
        }
    }

    #[test]
    fn query_loss_prefers_correct_predictions() {
        let mask = MaskTensor::new(array![[0u8, 1]], 2).unwrap();
        let good = MaskPrediction::new(Array3::from_shape_fn((1, 2, 1), |(_, j, _)| {
            if j == 0 {
                0.05
            } else {
                0.95
            }
        }))
        .unwrap();
        let bad = MaskPrediction::new(Array3::from_shape_fn((1, 2, 1), |(_, j, _)| {
            if j == 0 {
                0.95
            } else {
                0.05
            }
        }))
        .unwrap();
        assert!(query_loss(&good, &mask).unwrap() < query_loss(&bad, &mask).unwrap());
    }

    #[test]
    fn victim_checkpoint_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = toy_split(&mut rng, 8, 8, 0.5);
        let spec = VictimSpec {
            arch: VictimArch::Dilated,
            split_id: "victim-train".into(),
            seed: 11,
        };
        let hp = VictimHyperparams {
            max_steps: 20,
            base_width: 4,
            gate_miou: 0.0,
            ..Default::default()
        };
        let trained = train_victim(&spec, &train, &train, &hp).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ckpt");
        trained.save(&path).unwrap();
        let back = TrainedVictim::load(&path).unwrap();
        assert_eq!(back.spec, trained.spec);
        let x = &train[0].0;
        assert_eq!(
            trained.victim.predict(x).unwrap().probs(),
            back.victim.predict(x).unwrap().probs()
        );
    }
}
