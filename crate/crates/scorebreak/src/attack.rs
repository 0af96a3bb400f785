//! Score-driven attack generation and baselines.
//!
//! The main loop drives a pseudo sample through the noise schedule, reads
//! the conditional segmentation score at each step, accumulates sign steps
//! into an l-inf-bounded perturbation, and optionally queries a black-box
//! victim to keep the argmax-loss accumulation state. The final adversarial
//! sample is always built from the clean image and the accumulated
//! perturbation; the pseudo sample only produces per-step scores.
//!
//! Baselines: single-step and iterated sign attacks on a gradient-accessible
//! victim, a random-sign query search, and a Gaussian-noise control.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cfgscore::{conditional_segmentation_score, GuidanceParams};
use crate::error::{Error, Result};
use crate::oracle::ScoreOracle;
use crate::schedule::NoiseSchedule;
use crate::tensor::{ConditionMap, ImageTensor, MaskTensor};
use crate::victim::{query_loss, LossGradient, QueryTarget};

/// Maps an attack step index to a diffusion timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestepMap {
    /// t = m + 1: the low-noise head of the schedule (default).
    Head,
    /// Steps spread linearly over [1, T].
    LinearSpread,
    /// One fixed timestep for every step.
    Fixed(usize),
}

impl TimestepMap {
    pub fn timestep(&self, m: usize, m_max: usize, t_total: usize) -> usize {
        match self {
            TimestepMap::Head => m + 1,
            TimestepMap::LinearSpread => {
                if m_max <= 1 {
                    1
                } else {
                    1 + (m as f64 * (t_total - 1) as f64 / (m_max - 1) as f64).round() as usize
                }
            }
            TimestepMap::Fixed(t) => *t,
        }
    }
}

/// Whether the schedule factor in the attack equations reads the per-step
/// retention or the cumulative product. The source formulation is ambiguous;
/// per-step is the default and both are selectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    PerStep,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// l-inf budget as a fraction of the value-range width (8/255).
    pub epsilon: f64,
    /// Sign-step size as a fraction of the value-range width (2/255).
    pub mu: f64,
    /// Attack steps: 30 query-free, 100 with querying.
    pub m_max: usize,
    /// Guidance weight.
    pub omega: f64,
    pub t_map: TimestepMap,
    pub alpha_mode: AlphaMode,
    pub query_enabled: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: 8.0 / 255.0,
            mu: 2.0 / 255.0,
            m_max: 30,
            omega: 90.0,
            t_map: TimestepMap::Head,
            alpha_mode: AlphaMode::PerStep,
            query_enabled: false,
        }
    }
}

impl AttackConfig {
    /// The paper's query configuration: 100 steps with victim feedback.
    pub fn query_default() -> Self {
        Self {
            m_max: 100,
            query_enabled: true,
            ..Self::default()
        }
    }

    pub fn validate(&self, sched: &NoiseSchedule) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= self.epsilon) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < mu <= epsilon, got mu {} epsilon {}",
                self.mu, self.epsilon
            )));
        }
        if self.m_max == 0 {
            return Err(Error::InvalidConfig("m_max must be >= 1".into()));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidConfig("omega must be finite".into()));
        }
        for m in 0..self.m_max {
            let t = self.t_map.timestep(m, self.m_max, sched.steps());
            if t == 0 || t > sched.steps() {
                return Err(Error::InvalidTimestep {
                    t,
                    max: sched.steps(),
                });
            }
        }
        Ok(())
    }

    pub fn epsilon_abs(&self, x: &ImageTensor) -> f64 {
        self.epsilon * x.range().width()
    }

    pub fn mu_abs(&self, x: &ImageTensor) -> f64 {
        self.mu * x.range().width()
    }

    fn schedule_alpha(&self, sched: &NoiseSchedule, t: usize) -> Result<f64> {
        match self.alpha_mode {
            AlphaMode::PerStep => sched.alpha(t),
            AlphaMode::Cumulative => sched.alpha_bar(t),
        }
    }
}

/// Per-step trace entry.
#[derive(Debug, Clone, Serialize)]
pub struct StepTrace {
    pub m: usize,
    pub t: usize,
    pub max_abs_delta_m: f64,
    pub mean_abs_delta_m: f64,
    pub query_loss: Option<f64>,
}

/// Attack output: final sample, accumulated perturbation, per-step trace and
/// query bookkeeping.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub x_adv: ImageTensor,
    pub delta_adv: ImageTensor,
    pub trace: Vec<StepTrace>,
    pub queries_used: usize,
    pub best_query_loss: Option<f64>,
    /// True when the returned perturbation is the argmax-loss snapshot.
    pub used_best: bool,
    /// Query mode ran but no query ever improved on the initial threshold;
    /// the accumulated perturbation was returned instead.
    pub no_query_improvement: bool,
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Step-wise perturbation before the sign activation:
/// `-sqrt(1 - alpha) * omega * (s(x|y) - s(x))` at the mapped timestep.
pub fn step_perturbation(
    oracle: &dyn ScoreOracle,
    x_pseudo: &ImageTensor,
    y: &ConditionMap,
    m: usize,
    cfg: &AttackConfig,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    if !x_pseudo.is_finite() {
        return Err(Error::NonFinite("pseudo adversarial sample"));
    }
    let t = cfg.t_map.timestep(m, cfg.m_max, sched.steps());
    let alpha = cfg.schedule_alpha(sched, t)?;
    let guided = conditional_segmentation_score(
        oracle,
        x_pseudo,
        y,
        t,
        &GuidanceParams { omega: cfg.omega },
    )?;
    let coeff = -(1.0 - alpha).sqrt();
    Ok(guided.map(|v| coeff * v))
}

/// Noise the pseudo sample with schedule weights and clip it to the
/// epsilon-ball around the clean image intersected with the value range:
/// `CLIP_x(sqrt(alpha) * x_pseudo + sqrt(1 - alpha) * delta_m)`.
pub fn advance_pseudo(
    x_pseudo: &ImageTensor,
    delta_m: &ImageTensor,
    x_clean: &ImageTensor,
    m: usize,
    cfg: &AttackConfig,
    sched: &NoiseSchedule,
) -> Result<ImageTensor> {
    let t = cfg.t_map.timestep(m, cfg.m_max, sched.steps());
    let alpha = cfg.schedule_alpha(sched, t)?;
    let eps = cfg.epsilon_abs(x_clean);
    let range = x_clean.range();
    let mixed = x_pseudo.zip_with(delta_m, |x, d| alpha.sqrt() * x + (1.0 - alpha).sqrt() * d)?;
    mixed.zip_with(x_clean, |v, c| {
        v.clamp((c - eps).max(range.min), (c + eps).min(range.max))
    })
}

/// Sign-accumulate into the l-inf ball:
/// `CLIP_eps(mu * sign(delta_m) + delta_adv)`.
pub fn accumulate(
    delta_adv: &ImageTensor,
    delta_m: &ImageTensor,
    cfg: &AttackConfig,
) -> Result<ImageTensor> {
    let eps = cfg.epsilon_abs(delta_adv);
    let mu = cfg.mu_abs(delta_adv);
    delta_adv.zip_with(delta_m, |acc, d| (acc + mu * sign(d)).clamp(-eps, eps))
}

/// Final sample per the accumulation contract: range-clip of `x + delta`.
pub fn finalize(x_clean: &ImageTensor, delta_adv: &ImageTensor) -> Result<ImageTensor> {
    Ok(x_clean.zip_with(delta_adv, |x, d| x + d)?.clip_to_range())
}

fn trace_entry(m: usize, t: usize, delta_m: &ImageTensor, query_loss: Option<f64>) -> StepTrace {
    let n = delta_m.data().len() as f64;
    let (mut max_abs, mut sum_abs) = (0.0f64, 0.0f64);
    for &v in delta_m.data() {
        max_abs = max_abs.max(v.abs());
        sum_abs += v.abs();
    }
    StepTrace {
        m,
        t,
        max_abs_delta_m: max_abs,
        mean_abs_delta_m: sum_abs / n,
        query_loss,
    }
}

/// The score-estimation attack loop.
///
/// Query mode evaluates the victim on the pseudo sample of each step and
/// keeps the accumulation snapshot of the best query; if no query ever
/// improves on the initial threshold the accumulated perturbation is
/// returned with `no_query_improvement` set. A victim failure aborts with
/// the partial trace preserved inside the error.
pub fn run_attack(
    oracle: &dyn ScoreOracle,
    x: &ImageTensor,
    y: &MaskTensor,
    cfg: &AttackConfig,
    sched: &NoiseSchedule,
    victim: Option<&dyn QueryTarget>,
) -> Result<AttackResult> {
    cfg.validate(sched)?;
    if cfg.query_enabled && victim.is_none() {
        return Err(Error::InvalidConfig(
            "query mode needs a victim to query".into(),
        ));
    }
    let cond = y.to_condition();
    let mut x_pseudo = x.clone();
    let mut delta_adv = x.map(|_| 0.0);
    let mut trace = Vec::with_capacity(cfg.m_max);
    let mut best: Option<(f64, ImageTensor)> = None;
    let mut best_loss = 0.0f64;
    let mut queries = 0usize;

    for m in 0..cfg.m_max {
        let t = cfg.t_map.timestep(m, cfg.m_max, sched.steps());
        let delta_m = step_perturbation(oracle, &x_pseudo, &cond, m, cfg, sched)?;
        delta_adv = accumulate(&delta_adv, &delta_m, cfg)?;
        // The query sample is this step's pseudo input, not x + delta_adv.
        let x_query = x_pseudo.clone();
        x_pseudo = advance_pseudo(&x_pseudo, &delta_m, x, m, cfg, sched)?;

        let mut step_loss = None;
        if cfg.query_enabled {
            let victim = victim.expect("validated above");
            queries += 1;
            let loss = match victim.predict(&x_query).and_then(|p| query_loss(&p, y)) {
                Ok(l) => l,
                Err(e) => {
                    trace.push(trace_entry(m, t, &delta_m, None));
                    return Err(Error::QueryFailed {
                        step: m,
                        message: format!("{e}; {} trace steps retained", trace.len()),
                    });
                }
            };
            step_loss = Some(loss);
            if loss > best_loss {
                best_loss = loss;
                best = Some((loss, delta_adv.clone()));
            }
        }
        trace.push(trace_entry(m, t, &delta_m, step_loss));
    }

    let (delta_final, used_best, no_improvement, best_query_loss) = match (cfg.query_enabled, best)
    {
        (true, Some((loss, snapshot))) => (snapshot, true, false, Some(loss)),
        (true, None) => (delta_adv.clone(), false, true, None),
        (false, _) => (delta_adv.clone(), false, false, None),
    };
    let x_adv = finalize(x, &delta_final)?;
    Ok(AttackResult {
        x_adv,
        delta_adv: delta_final,
        trace,
        queries_used: queries,
        best_query_loss,
        used_best,
        no_query_improvement: no_improvement,
    })
}

/// Single-step sign attack on a gradient-accessible victim, clipped to the
/// value range.
pub fn fgsm(
    victim: &dyn LossGradient,
    x: &ImageTensor,
    y: &MaskTensor,
    epsilon: f64,
) -> Result<ImageTensor> {
    let eps = epsilon * x.range().width();
    let (_, grad) = victim.loss_and_grad(x, y)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("victim gradient"));
    }
    Ok(x.zip_with(&grad, |v, g| v + eps * sign(g))?.clip_to_range())
}

/// Iterated sign attack with per-step projection onto the epsilon ball
/// around the clean image and the value range.
pub fn pgd(
    victim: &dyn LossGradient,
    x: &ImageTensor,
    y: &MaskTensor,
    epsilon: f64,
    mu: f64,
    steps: usize,
) -> Result<ImageTensor> {
    let eps = epsilon * x.range().width();
    let step = mu * x.range().width();
    let range = x.range();
    let mut x_adv = x.clone();
    for _ in 0..steps {
        let (_, grad) = victim.loss_and_grad(&x_adv, y)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite("victim gradient"));
        }
        let moved = x_adv.zip_with(&grad, |v, g| v + step * sign(g))?;
        x_adv = moved.zip_with(x, |v, c| {
            v.clamp((c - eps).max(range.min), (c + eps).min(range.max))
        })?;
    }
    Ok(x_adv)
}

/// Random-sign query baseline: propose sign patterns scaled to the epsilon
/// ball, keep the argmax-loss proposal.
pub fn random_query_attack<R: Rng>(
    victim: &dyn QueryTarget,
    x: &ImageTensor,
    y: &MaskTensor,
    epsilon: f64,
    budget: usize,
    rng: &mut R,
) -> Result<AttackResult> {
    if budget == 0 {
        return Err(Error::InvalidConfig("query budget must be >= 1".into()));
    }
    let eps = epsilon * x.range().width();
    let mut best_loss = f64::NEG_INFINITY;
    let mut best_delta = x.map(|_| 0.0);
    let mut trace = Vec::with_capacity(budget);
    for q in 0..budget {
        let delta = x.map(|_| eps * sign(rng.sample::<f64, _>(StandardNormal)));
        let proposal = finalize(x, &delta)?;
        let loss = query_loss(&victim.predict(&proposal)?, y)?;
        trace.push(trace_entry(q, 0, &delta, Some(loss)));
        if loss > best_loss {
            best_loss = loss;
            best_delta = delta;
        }
    }
    let x_adv = finalize(x, &best_delta)?;
    Ok(AttackResult {
        x_adv,
        delta_adv: best_delta,
        trace,
        queries_used: budget,
        best_query_loss: Some(best_loss),
        used_best: true,
        no_query_improvement: false,
    })
}

/// Null-hypothesis control: accumulate sign steps of pure Gaussian noise
/// under the same clipping rules.
pub fn gaussian_noise_control<R: Rng>(
    x: &ImageTensor,
    epsilon: f64,
    mu: f64,
    steps: usize,
    rng: &mut R,
) -> Result<ImageTensor> {
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    let eps = epsilon * x.range().width();
    let mu_abs = mu * x.range().width();
    let mut delta = x.map(|_| 0.0);
    for _ in 0..steps {
        let noise = crate::schedule::gaussian_like(x, rng);
        delta = delta.zip_with(&noise, |d, g| (d + mu_abs * sign(g)).clamp(-eps, eps))?;
    }
    finalize(x, &delta)
}
