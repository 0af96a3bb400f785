//! Joint conditional/unconditional noise-estimator training.
//!
//! One U-net is trained on both branches: per step a single uniform draw
//! decides whether the whole batch conditions on its masks or on the -1
//! sentinel. The loss is the noise-matching residual
//! `mean((sqrt(1 - alpha_bar_t) * s + z)^2)`, so the converged network output
//! is the score of the diffused data distribution.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{Container, ContainerHeader};
use crate::error::{Error, Result};
use crate::nn::{Adam, CondUnet, Feat, Grads};
use crate::oracle::ScoreOracle;
use crate::schedule::{forward_diffuse, gaussian_like, NoiseSchedule, ScheduleSpec};
use crate::tensor::{ConditionMap, ImageTensor, MaskTensor, ValueRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Probability of substituting the -1 sentinel for the condition.
    pub uncond_probability: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// (height, width); both must be divisible by 4.
    pub image_size: (usize, usize),
    pub image_channels: usize,
    pub condition_channels: usize,
    /// U-net width at full resolution.
    pub base_width: usize,
    /// Sinusoidal timestep embedding dimension (even).
    pub embed_dim: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            uncond_probability: 0.1,
            // The reference rate targets large images; toy 32x32 data trains
            // comfortably an order of magnitude higher.
            learning_rate: 2e-4,
            batch_size: 8,
            max_steps: 2000,
            image_size: (32, 32),
            image_channels: 3,
            condition_channels: 1,
            base_width: 8,
            embed_dim: 16,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.uncond_probability) {
            return Err(Error::InvalidConfig(format!(
                "uncond_probability {} outside [0, 1]",
                self.uncond_probability
            )));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.image_size.0 % 4 != 0 || self.image_size.1 % 4 != 0 {
            return Err(Error::InvalidConfig(
                "image size must be divisible by 4".into(),
            ));
        }
        if self.embed_dim < 2 || self.embed_dim % 2 != 0 {
            return Err(Error::InvalidConfig("embed_dim must be even".into()));
        }
        Ok(())
    }
}

/// Noise-matching residual `mean((sqrt(1 - alpha_bar_t) * s + z)^2)`.
pub fn training_target_residual(
    predicted_score: &ImageTensor,
    z: &ImageTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let ab = sched.alpha_bar(t)?;
    let coeff = (1.0 - ab).sqrt();
    let residual = predicted_score.zip_with(z, |s, n| coeff * s + n)?;
    let n = residual.data().len() as f64;
    Ok(residual.data().iter().map(|v| v * v).sum::<f64>() / n)
}

/// HWC f64 image to CHW f32 features.
pub(crate) fn image_to_feat(x: &ImageTensor) -> Feat {
    let (h, w, c) = x.dim();
    Feat::from_shape_fn((c, h, w), |(ci, i, j)| x.data()[(i, j, ci)] as f32)
}

pub(crate) fn feat_to_image(f: &Feat, range: ValueRange) -> ImageTensor {
    let (c, h, w) = f.dim();
    ImageTensor::new(
        ndarray::Array3::from_shape_fn((h, w, c), |(i, j, ci)| f[(ci, i, j)] as f64),
        range,
    )
}

pub(crate) fn condition_to_feat(c: &ConditionMap) -> Feat {
    let values = c.values();
    let (h, w, k) = values.dim();
    Feat::from_shape_fn((k, h, w), |(ci, i, j)| values[(i, j, ci)] as f32)
}

fn stack_input(x: &ImageTensor, c: &ConditionMap) -> Feat {
    let xf = image_to_feat(x);
    let cf = condition_to_feat(c);
    let (cx, h, w) = xf.dim();
    let (ck, _, _) = cf.dim();
    let mut out = Feat::zeros((cx + ck, h, w));
    out.slice_mut(ndarray::s![..cx, .., ..]).assign(&xf);
    out.slice_mut(ndarray::s![cx.., .., ..]).assign(&cf);
    out
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub loss: f64,
    /// Whether this step trained the unconditional branch.
    pub unconditional: bool,
}

/// Single-writer trainer owning the network and optimizer state.
pub struct ScoreNetTrainer {
    cfg: TrainingConfig,
    sched_spec: ScheduleSpec,
    sched: NoiseSchedule,
    net: CondUnet,
    opt: Adam,
    steps_done: u64,
    recent: VecDeque<f64>,
}

impl ScoreNetTrainer {
    pub fn new(cfg: TrainingConfig, sched_spec: ScheduleSpec, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let sched = sched_spec.build()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        use rand::SeedableRng;
        let net = CondUnet::new(
            cfg.image_channels + cfg.condition_channels,
            cfg.image_channels,
            cfg.base_width,
            Some(cfg.embed_dim),
            &mut rng,
        );
        let opt = Adam::new(cfg.learning_rate as f32);
        Ok(Self {
            cfg,
            sched_spec,
            sched,
            net,
            opt,
            steps_done: 0,
            recent: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    fn check_batch(&self, batch: &[(ImageTensor, MaskTensor)]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("empty training batch".into()));
        }
        for (img, mask) in batch {
            let (h, w, c) = img.dim();
            if (h, w) != self.cfg.image_size || c != self.cfg.image_channels {
                return Err(Error::ShapeMismatch {
                    expected: format!(
                        "{:?} x{}",
                        self.cfg.image_size, self.cfg.image_channels
                    ),
                    got: format!("{:?} x{c}", (h, w)),
                });
            }
            if mask.dim() != (h, w) || mask.condition_channels() != self.cfg.condition_channels {
                return Err(Error::InvalidCondition(format!(
                    "mask {:?} with {} condition channels does not fit config",
                    mask.dim(),
                    mask.condition_channels()
                )));
            }
        }
        Ok(())
    }

    /// One stochastic-conditioning optimizer step over a batch.
    pub fn train_step<R: Rng>(
        &mut self,
        batch: &[(ImageTensor, MaskTensor)],
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.check_batch(batch)?;
        let t_max = self.sched.steps();
        let beta: f64 = rng.random();
        let unconditional = beta < self.cfg.uncond_probability;

        // Draw all randomness up front so the parallel section is pure.
        let mut items = Vec::with_capacity(batch.len());
        for (img, mask) in batch {
            let t = rng.random_range(1..=t_max);
            let z = gaussian_like(img, rng);
            let x_t = forward_diffuse(img, t, &z, &self.sched)?;
            let cond = if unconditional {
                let (h, w) = mask.dim();
                ConditionMap::unconditional(h, w, self.cfg.condition_channels)
            } else {
                mask.to_condition()
            };
            let input = stack_input(&x_t, &cond);
            let z_feat = image_to_feat(&z);
            let coeff = (1.0 - self.sched.alpha_bar(t)?).sqrt() as f32;
            items.push((input, z_feat, coeff, t));
        }

        let inv_batch = 1.0 / batch.len() as f32;
        let results: Vec<(f64, Grads)> = items
            .par_iter()
            .map(|(input, z_feat, coeff, t)| {
                let (s, cache) = self.net.forward_train(input, Some(*t));
                let n = s.len() as f32;
                let mut loss = 0.0f64;
                let mut gy = Feat::zeros(s.raw_dim());
                ndarray::Zip::from(&mut gy).and(&s).and(z_feat).for_each(
                    |g, &sv, &zv| {
                        let r = coeff * sv + zv;
                        loss += (r as f64) * (r as f64);
                        *g = 2.0 * coeff * r / n * inv_batch;
                    },
                );
                loss /= n as f64;
                let (grads, _) = self.net.backward(&cache, &gy);
                (loss, grads)
            })
            .collect();

        let mut total_loss = 0.0;
        let mut summed: Option<Grads> = None;
        for (loss, grads) in results {
            total_loss += loss;
            match &mut summed {
                None => summed = Some(grads),
                Some(acc) => acc.add_assign(&grads),
            }
        }
        let grads = summed.expect("nonempty batch");
        self.opt.step(self.net.param_slices_mut(), &grads);
        self.steps_done += 1;
        let loss = total_loss / batch.len() as f64;
        if self.recent.len() >= 100 {
            self.recent.pop_front();
        }
        self.recent.push_back(loss);
        Ok(StepOutcome {
            loss,
            unconditional,
        })
    }

    /// Run the configured budget over a dataset, cycling batches in order.
    pub fn train<R: Rng>(
        &mut self,
        data: &[(ImageTensor, MaskTensor)],
        rng: &mut R,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::InvalidConfig("empty training set".into()));
        }
        let mut last = 0.0;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut cursor = data.len();
        for _ in 0..self.cfg.max_steps {
            let mut batch = Vec::with_capacity(self.cfg.batch_size);
            for _ in 0..self.cfg.batch_size {
                if cursor >= order.len() {
                    // Fisher-Yates reshuffle per epoch.
                    for i in (1..order.len()).rev() {
                        order.swap(i, rng.random_range(0..=i));
                    }
                    cursor = 0;
                }
                let (img, mask) = &data[order[cursor]];
                batch.push((img.clone(), mask.clone()));
                cursor += 1;
            }
            last = self.train_step(&batch, rng)?.loss;
        }
        Ok(last)
    }

    pub fn mean_recent_loss(&self) -> Option<f64> {
        if self.recent.is_empty() {
            None
        } else {
            Some(self.recent.iter().sum::<f64>() / self.recent.len() as f64)
        }
    }

    pub fn checkpoint(&self) -> ScoreNetCheckpoint {
        ScoreNetCheckpoint {
            config: self.cfg.clone(),
            schedule: self.sched_spec,
            train_steps: self.steps_done,
            final_loss: self.mean_recent_loss(),
            tensors: self
                .net
                .named_tensors()
                .into_iter()
                .map(|(n, s, d)| (n, (s, d)))
                .collect(),
        }
    }
}

/// Serializable network snapshot: config, schedule spec and weights.
#[derive(Debug, Clone)]
pub struct ScoreNetCheckpoint {
    pub config: TrainingConfig,
    pub schedule: ScheduleSpec,
    pub train_steps: u64,
    pub final_loss: Option<f64>,
    pub tensors: std::collections::BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreNetHeaderConfig {
    training: TrainingConfig,
    schedule: ScheduleSpec,
}

impl ScoreNetCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        Container {
            header: ContainerHeader {
                kind: "score-net".into(),
                config: ScoreNetHeaderConfig {
                    training: self.config.clone(),
                    schedule: self.schedule,
                },
                train_steps: self.train_steps,
                final_loss: self.final_loss,
            },
            tensors: self.tensors.clone(),
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Container<ScoreNetHeaderConfig> = Container::load(path)?;
        if c.header.kind != "score-net" {
            return Err(Error::Checkpoint(format!(
                "expected a score-net checkpoint, found `{}`",
                c.header.kind
            )));
        }
        Ok(Self {
            config: c.header.config.training,
            schedule: c.header.config.schedule,
            train_steps: c.header.train_steps,
            final_loss: c.header.final_loss,
            tensors: c.tensors,
        })
    }

    /// Expose the trained network as a [`ScoreOracle`].
    pub fn as_oracle(&self) -> Result<NeuralScoreOracle> {
        self.config.validate()?;
        let mut rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(0)
        };
        let mut net = CondUnet::new(
            self.config.image_channels + self.config.condition_channels,
            self.config.image_channels,
            self.config.base_width,
            Some(self.config.embed_dim),
            &mut rng,
        );
        net.load_named(&self.tensors)?;
        Ok(NeuralScoreOracle {
            cfg: self.config.clone(),
            sched: self.schedule.build()?,
            net,
        })
    }
}

/// Read-only inference wrapper; concurrent `score` calls are safe.
pub struct NeuralScoreOracle {
    cfg: TrainingConfig,
    sched: NoiseSchedule,
    net: CondUnet,
}

impl NeuralScoreOracle {
    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }
}

impl ScoreOracle for NeuralScoreOracle {
    fn score(&self, x_t: &ImageTensor, c: &ConditionMap, t: usize) -> Result<ImageTensor> {
        let (h, w, ch) = x_t.dim();
        if (h, w) != self.cfg.image_size || ch != self.cfg.image_channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} x{}", self.cfg.image_size, self.cfg.image_channels),
                got: format!("{:?} x{ch}", (h, w)),
            });
        }
        let (chh, cww, k) = c.dim();
        if (chh, cww) != (h, w) || k != self.cfg.condition_channels {
            return Err(Error::InvalidCondition(format!(
                "condition {:?} x{k} does not fit network ({}x{} x{})",
                (chh, cww),
                self.cfg.image_size.0,
                self.cfg.image_size.1,
                self.cfg.condition_channels
            )));
        }
        self.sched.alpha_bar(t)?;
        let input = stack_input(x_t, c);
        let out = self.net.forward(&input, Some(t));
        Ok(feat_to_image(&out, x_t.range()))
    }
}
