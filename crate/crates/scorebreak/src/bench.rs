//! Config-driven experiment orchestration.
//!
//! A run trains (or loads from the checkpoint cache) the score net and the
//! victim segmenters, generates one adversarial set per attack method over
//! the eval split, evaluates every victim on every set, and persists a
//! long-format CSV, a pivoted JSON summary and comparison plots. All
//! randomness is seeded; rerunning an identical config and seed reproduces
//! the aggregate CSV byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{
    self, gaussian_noise_control, random_query_attack, run_attack, AttackConfig,
};
use crate::data::{self, DatasetManifest, Sample, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics;
use crate::plot::{self, Series};
use crate::schedule::ScheduleSpec;
use crate::scorenet::{ScoreNetCheckpoint, ScoreNetTrainer, TrainingConfig};
use crate::tensor::ImageTensor;
use crate::victim::{
    train_victim, LossGradient, QueryTarget, TrainedVictim, VictimArch, VictimHyperparams,
    VictimSpec,
};

pub const CACHE_ENV: &str = "SCOREBREAK_CACHE";

/// Where the corpus lives; when a synthetic spec is present and no manifest
/// exists yet, the corpus is generated in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub root: PathBuf,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimConfig {
    pub name: String,
    pub arch: VictimArch,
    #[serde(default)]
    pub hyperparams: VictimHyperparams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Score,
    ScoreQuery,
    Fgsm,
    Pgd,
    RandomQuery,
    NoiseControl,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Score => "score",
            MethodKind::ScoreQuery => "score-query",
            MethodKind::Fgsm => "fgsm",
            MethodKind::Pgd => "pgd",
            MethodKind::RandomQuery => "random-query",
            MethodKind::NoiseControl => "noise-control",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMethodConfig {
    pub name: String,
    pub method: MethodKind,
    /// Victim queried (score-query, random-query) or differentiated (fgsm,
    /// pgd); must name an entry of `victims`.
    #[serde(default)]
    pub victim: Option<String>,
    /// Iteration count for pgd / noise-control.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Query budget for random-query.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub attack: AttackConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    pub victims: Vec<VictimConfig>,
    pub attacks: Vec<AttackMethodConfig>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Checkpoint cache directory; falls back to SCOREBREAK_CACHE.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be explicit".into()));
        }
        if self.victims.is_empty() {
            return Err(Error::InvalidConfig("need at least one victim".into()));
        }
        let mut names: Vec<&str> = self.victims.iter().map(|v| v.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.victims.len() {
            return Err(Error::InvalidConfig("victim names must be unique".into()));
        }
        let mut attack_names: Vec<&str> = self.attacks.iter().map(|a| a.name.as_str()).collect();
        attack_names.sort();
        attack_names.dedup();
        if attack_names.len() != self.attacks.len() {
            return Err(Error::InvalidConfig("attack names must be unique".into()));
        }
        if self.attacks.iter().any(|a| a.name == "clean") {
            return Err(Error::InvalidConfig(
                "`clean` is the reserved baseline name".into(),
            ));
        }
        for a in &self.attacks {
            let needs_victim = matches!(
                a.method,
                MethodKind::ScoreQuery | MethodKind::RandomQuery | MethodKind::Fgsm | MethodKind::Pgd
            );
            if needs_victim {
                let v = a.victim.as_deref().ok_or_else(|| {
                    Error::InvalidConfig(format!("attack `{}` needs a victim name", a.name))
                })?;
                if !self.victims.iter().any(|vc| vc.name == v) {
                    return Err(Error::InvalidConfig(format!(
                        "attack `{}` references unknown victim `{v}`",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
    }

    /// Hash of the canonical config serialization; every reported number is
    /// traceable to (config hash, seed, image id).
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub seed: u64,
    pub image_id: String,
    pub victim: String,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

/// victims x methods aggregate: method -> victim -> metric -> mean.
pub type Aggregate = BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>;

#[derive(Debug)]
pub struct RunRecord {
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
    pub aggregate: Aggregate,
    pub wall_clock_secs: f64,
    pub artifacts: Vec<PathBuf>,
}

impl RunRecord {
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("method,victim,metric,value\n");
        for (method, victims) in &self.aggregate {
            for (victim, metrics) in victims {
                for (metric, value) in metrics {
                    out.push_str(&format!("{method},{victim},{metric},{value}\n"));
                }
            }
        }
        out
    }

    pub fn rows_csv(&self) -> String {
        let mut out = String::from("seed,image_id,victim,method,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.seed, r.image_id, r.victim, r.method, r.metric, r.value
            ));
        }
        out
    }

    /// Mean of a metric for (method, victim) from the aggregate table.
    pub fn mean(&self, method: &str, victim: &str, metric: &str) -> Option<f64> {
        self.aggregate.get(method)?.get(victim)?.get(metric).copied()
    }
}

fn short_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0u8]);
    }
    format!("{:x}", hasher.finalize())[..16].to_string()
}

/// Dataset stage: load the manifest, generating the corpus first when a
/// synthetic spec is configured and no manifest exists.
pub fn ensure_dataset(cfg: &DatasetConfig) -> Result<DatasetManifest> {
    let manifest_path = DatasetManifest::manifest_path(&cfg.root);
    if manifest_path.exists() {
        return data::read_manifest(&cfg.root);
    }
    match &cfg.synthetic {
        Some(spec) => data::generate(spec, cfg.seed, &cfg.root),
        None => Err(Error::InvalidConfig(format!(
            "no manifest at {} and no synthetic spec to generate one",
            manifest_path.display()
        ))),
    }
}

fn train_or_load_score_net(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    train: &[(ImageTensor, crate::tensor::MaskTensor)],
    seed: u64,
) -> Result<ScoreNetCheckpoint> {
    let cache_key = short_hash(&[
        "score-net",
        &serde_json::to_string(&cfg.training)?,
        &serde_json::to_string(&cfg.schedule)?,
        &serde_json::to_string(&manifest.header)?,
        &seed.to_string(),
    ]);
    let cache_path = cfg
        .cache_dir()
        .map(|dir| dir.join(format!("score-{cache_key}.ckpt")));
    if let Some(path) = &cache_path {
        if path.exists() {
            return ScoreNetCheckpoint::load(path);
        }
    }
    let mut trainer = ScoreNetTrainer::new(cfg.training.clone(), cfg.schedule, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5c0e);
    trainer.train(train, &mut rng)?;
    let ckpt = trainer.checkpoint();
    if let Some(path) = &cache_path {
        ckpt.save(path)?;
    }
    Ok(ckpt)
}

fn train_or_load_victim(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    vc: &VictimConfig,
    train: &[(ImageTensor, crate::tensor::MaskTensor)],
    val: &[(ImageTensor, crate::tensor::MaskTensor)],
    seed: u64,
    index: usize,
) -> Result<TrainedVictim> {
    let spec = VictimSpec {
        arch: vc.arch,
        split_id: Split::VictimTrain.as_str().to_string(),
        seed: seed.wrapping_mul(100).wrapping_add(index as u64),
    };
    let cache_key = short_hash(&[
        "victim",
        &vc.name,
        &serde_json::to_string(&spec)?,
        &serde_json::to_string(&vc.hyperparams)?,
        &serde_json::to_string(&manifest.header)?,
    ]);
    let cache_path = cfg
        .cache_dir()
        .map(|dir| dir.join(format!("victim-{cache_key}.ckpt")));
    if let Some(path) = &cache_path {
        if path.exists() {
            return TrainedVictim::load(path);
        }
    }
    let trained = train_victim(&spec, train, val, &vc.hyperparams)?;
    if let Some(path) = &cache_path {
        trained.save(path)?;
    }
    Ok(trained)
}

/// Deterministic per-(seed, method, image) RNG.
fn attack_rng(seed: u64, method: &str, image_idx: usize) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(method.as_bytes());
    let digest = hasher.finalize();
    let tag = u64::from_le_bytes(digest[..8].try_into().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag);
    rng.set_stream(image_idx as u64);
    rng
}

fn generate_adversarial_set(
    cfg: &ExperimentConfig,
    method: &AttackMethodConfig,
    oracle: &dyn crate::oracle::ScoreOracle,
    victims: &BTreeMap<String, TrainedVictim>,
    eval: &[Sample],
    seed: u64,
) -> Result<Vec<ImageTensor>> {
    let sched = cfg.schedule.build()?;
    let named_victim = |name: &Option<String>| -> Result<&TrainedVictim> {
        let n = name.as_deref().expect("validated");
        Ok(&victims[n])
    };
    let outputs: Vec<Result<ImageTensor>> = eval
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| match method.method {
            MethodKind::Score => {
                let mut attack_cfg = method.attack;
                attack_cfg.query_enabled = false;
                run_attack(oracle, &sample.image, &sample.mask, &attack_cfg, &sched, None)
                    .map(|r| r.x_adv)
            }
            MethodKind::ScoreQuery => {
                let victim = named_victim(&method.victim)?;
                let mut attack_cfg = method.attack;
                attack_cfg.query_enabled = true;
                run_attack(
                    oracle,
                    &sample.image,
                    &sample.mask,
                    &attack_cfg,
                    &sched,
                    Some(&victim.victim as &dyn QueryTarget),
                )
                .map(|r| r.x_adv)
            }
            MethodKind::Fgsm => {
                let victim = named_victim(&method.victim)?;
                attack::fgsm(
                    &victim.victim as &dyn LossGradient,
                    &sample.image,
                    &sample.mask,
                    method.attack.epsilon,
                )
            }
            MethodKind::Pgd => {
                let victim = named_victim(&method.victim)?;
                attack::pgd(
                    &victim.victim as &dyn LossGradient,
                    &sample.image,
                    &sample.mask,
                    method.attack.epsilon,
                    method.attack.mu,
                    method.steps.unwrap_or(10),
                )
            }
            MethodKind::RandomQuery => {
                let victim = named_victim(&method.victim)?;
                let mut rng = attack_rng(seed, &method.name, idx);
                random_query_attack(
                    &victim.victim as &dyn QueryTarget,
                    &sample.image,
                    &sample.mask,
                    method.attack.epsilon,
                    method.budget.unwrap_or(100),
                    &mut rng,
                )
                .map(|r| r.x_adv)
            }
            MethodKind::NoiseControl => {
                let mut rng = attack_rng(seed, &method.name, idx);
                gaussian_noise_control(
                    &sample.image,
                    method.attack.epsilon,
                    method.attack.mu,
                    method.steps.unwrap_or(100),
                    &mut rng,
                )
            }
        })
        .collect();
    outputs.into_iter().collect()
}

fn evaluate_rows(
    seed: u64,
    method_name: &str,
    images: &[ImageTensor],
    eval: &[Sample],
    victims: &BTreeMap<String, TrainedVictim>,
    victim_order: &[String],
    num_classes: usize,
) -> Result<Vec<MetricRow>> {
    let per_image: Vec<Result<Vec<MetricRow>>> = eval
        .par_iter()
        .zip(images)
        .map(|(sample, x)| {
            let mut rows = Vec::new();
            for vname in victim_order {
                let victim = &victims[vname];
                let pred = victim.victim.predict(x)?;
                let values = if num_classes == 2 {
                    let prob = pred.binary_prob()?;
                    metrics::binary_metrics(&prob, &sample.mask.foreground())?
                } else {
                    metrics::multiclass_metrics(
                        &pred.class_map(),
                        sample.mask.labels(),
                        num_classes,
                    )?
                };
                for (metric, value) in values {
                    rows.push(MetricRow {
                        seed,
                        image_id: sample.id.clone(),
                        victim: vname.clone(),
                        method: method_name.to_string(),
                        metric,
                        value,
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_image {
        out.extend(rows?);
    }
    Ok(out)
}

fn aggregate_rows(rows: &[MetricRow]) -> Aggregate {
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = sums
            .entry((r.method.clone(), r.victim.clone(), r.metric.clone()))
            .or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    let mut agg: Aggregate = BTreeMap::new();
    for ((method, victim, metric), (sum, n)) in sums {
        agg.entry(method)
            .or_default()
            .entry(victim)
            .or_default()
            .insert(metric, sum / n as f64);
    }
    agg
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    record: &mut RunRecord,
    partial: bool,
) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let rows_path = cfg.output_dir.join("results.csv");
    std::fs::write(&rows_path, record.rows_csv())?;
    record.artifacts.push(rows_path);
    let agg_path = cfg.output_dir.join("aggregate.csv");
    std::fs::write(&agg_path, record.aggregate_csv())?;
    record.artifacts.push(agg_path);
    let summary = serde_json::json!({
        "config_hash": record.config_hash,
        "partial": partial,
        "aggregate": record.aggregate,
        "wall_clock_secs": record.wall_clock_secs,
    });
    let json_path = cfg.output_dir.join("summary.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&summary)?)?;
    record.artifacts.push(json_path);

    // One comparison plot per metric: mean value per method, one series per
    // victim, methods indexed in config order.
    let mut methods: Vec<String> = vec!["clean".to_string()];
    methods.extend(cfg.attacks.iter().map(|a| a.name.clone()));
    let metrics_present: Vec<String> = record
        .aggregate
        .values()
        .flat_map(|v| v.values().flat_map(|m| m.keys().cloned()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for metric in &metrics_present {
        let mut series = Vec::new();
        for vc in &cfg.victims {
            let points: Vec<(f64, f64)> = methods
                .iter()
                .enumerate()
                .filter_map(|(i, m)| record.mean(m, &vc.name, metric).map(|v| (i as f64, v)))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    name: vc.name.clone(),
                    points,
                });
            }
        }
        if series.is_empty() {
            continue;
        }
        let plot_path = cfg.output_dir.join(format!("{metric}.svg"));
        plot::write_line_chart(
            &plot_path,
            &format!("{metric} by method (0=clean)"),
            "method index",
            metric,
            &series,
        )?;
        record.artifacts.push(plot_path);
    }
    Ok(())
}

/// Run the full pipeline for every configured seed.
///
/// On a stage failure the rows gathered so far are flushed to the output
/// directory before the error propagates.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let mut record = RunRecord {
        config_hash: cfg.config_hash(),
        rows: Vec::new(),
        aggregate: Aggregate::new(),
        wall_clock_secs: 0.0,
        artifacts: Vec::new(),
    };
    match run_experiment_inner(cfg, &mut record) {
        Ok(()) => {
            record.wall_clock_secs = started.elapsed().as_secs_f64();
            record.aggregate = aggregate_rows(&record.rows);
            write_artifacts(cfg, &mut record, false)?;
            Ok(record)
        }
        Err(e) => {
            record.wall_clock_secs = started.elapsed().as_secs_f64();
            record.aggregate = aggregate_rows(&record.rows);
            let _ = write_artifacts(cfg, &mut record, true);
            let _ = std::fs::write(
                cfg.output_dir.join("error.json"),
                serde_json::json!({ "error": e.to_string() }).to_string(),
            );
            Err(e)
        }
    }
}

fn run_experiment_inner(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<()> {
    let manifest = ensure_dataset(&cfg.dataset)?;
    if !manifest.splits_disjoint() {
        return Err(Error::InvalidConfig(
            "dataset splits are not disjoint".into(),
        ));
    }
    let num_classes = manifest.header.spec.num_classes;
    let score_samples = data::load_split(&manifest, Split::ScoreTrain)?;
    let victim_samples = data::load_split(&manifest, Split::VictimTrain)?;
    let eval_samples = data::load_split(&manifest, Split::Eval)?;
    // Data isolation, asserted on sample ids.
    {
        let score_ids: std::collections::BTreeSet<_> =
            score_samples.iter().map(|s| &s.id).collect();
        if victim_samples.iter().any(|s| score_ids.contains(&s.id)) {
            return Err(Error::InvalidConfig(
                "victim split overlaps the score split".into(),
            ));
        }
    }
    let score_pairs = data::split_pairs(&score_samples);
    let victim_pairs = data::split_pairs(&victim_samples);
    let eval_pairs = data::split_pairs(&eval_samples);
    let victim_order: Vec<String> = cfg.victims.iter().map(|v| v.name.clone()).collect();

    for &seed in &cfg.seeds {
        let ckpt = train_or_load_score_net(cfg, &manifest, &score_pairs, seed)?;
        let oracle = ckpt.as_oracle()?;

        let mut victims = BTreeMap::new();
        for (idx, vc) in cfg.victims.iter().enumerate() {
            let trained =
                train_or_load_victim(cfg, &manifest, vc, &victim_pairs, &eval_pairs, seed, idx)?;
            if !trained.gate_passed {
                return Err(Error::GateFailed {
                    miou: trained.clean_miou,
                    required: vc.hyperparams.gate_miou,
                });
            }
            victims.insert(vc.name.clone(), trained);
        }

        // Clean baseline.
        let clean_images: Vec<ImageTensor> =
            eval_samples.iter().map(|s| s.image.clone()).collect();
        record.rows.extend(evaluate_rows(
            seed,
            "clean",
            &clean_images,
            &eval_samples,
            &victims,
            &victim_order,
            num_classes,
        )?);

        for method in &cfg.attacks {
            let adv =
                generate_adversarial_set(cfg, method, &oracle, &victims, &eval_samples, seed)?;
            record.rows.extend(evaluate_rows(
                seed,
                &method.name,
                &adv,
                &eval_samples,
                &victims,
                &victim_order,
                num_classes,
            )?);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Omega,
    MMax,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::MMax => "m-max",
        }
    }
}

/// One run per parameter value with shared seeds and dataset, plus a merged
/// comparison table and line plot.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<RunRecord>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut records = Vec::new();
    for &value in values {
        let mut run_cfg = cfg.clone();
        for a in &mut run_cfg.attacks {
            if matches!(a.method, MethodKind::Score | MethodKind::ScoreQuery) {
                match param {
                    SweepParam::Omega => a.attack.omega = value,
                    SweepParam::MMax => a.attack.m_max = value as usize,
                }
            }
        }
        run_cfg.output_dir = cfg
            .output_dir
            .join(format!("{}-{}", param.as_str(), value));
        records.push(run_experiment(&run_cfg)?);
    }

    // Merged long CSV and one plot per (attack, metric) over the sweep axis.
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut merged = String::from("value,method,victim,metric,mean\n");
    for (record, &value) in records.iter().zip(values) {
        for (method, victims) in &record.aggregate {
            for (victim, ms) in victims {
                for (metric, mean) in ms {
                    merged.push_str(&format!("{value},{method},{victim},{metric},{mean}\n"));
                }
            }
        }
    }
    std::fs::write(cfg.output_dir.join("sweep.csv"), merged)?;

    let score_methods: Vec<&AttackMethodConfig> = cfg
        .attacks
        .iter()
        .filter(|a| matches!(a.method, MethodKind::Score | MethodKind::ScoreQuery))
        .collect();
    let metric_names: Vec<String> = records
        .first()
        .map(|r| {
            r.aggregate
                .values()
                .flat_map(|v| v.values().flat_map(|m| m.keys().cloned()))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect()
        })
        .unwrap_or_default();
    for method in &score_methods {
        for metric in &metric_names {
            let mut series = Vec::new();
            for vc in &cfg.victims {
                let points: Vec<(f64, f64)> = records
                    .iter()
                    .zip(values)
                    .filter_map(|(r, &v)| {
                        r.mean(&method.name, &vc.name, metric).map(|m| (v, m))
                    })
                    .collect();
                if !points.is_empty() {
                    series.push(Series {
                        name: vc.name.clone(),
                        points,
                    });
                }
            }
            if !series.is_empty() {
                plot::write_line_chart(
                    &cfg.output_dir
                        .join(format!("sweep-{}-{metric}.svg", method.name)),
                    &format!("{} {metric} vs {}", method.name, param.as_str()),
                    param.as_str(),
                    metric,
                    &series,
                )?;
            }
        }
    }
    Ok(records)
}

/// A ready-to-edit config template for the CLI.
pub fn template_config(root: &Path, output: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig {
            root: root.to_path_buf(),
            synthetic: Some(SyntheticSpec::default()),
            seed: 7,
        },
        schedule: ScheduleSpec::default(),
        training: TrainingConfig::default(),
        victims: vec![
            VictimConfig {
                name: "unet".into(),
                arch: VictimArch::MiniUnet,
                hyperparams: VictimHyperparams::default(),
            },
            VictimConfig {
                name: "dilated".into(),
                arch: VictimArch::Dilated,
                hyperparams: VictimHyperparams::default(),
            },
        ],
        attacks: vec![
            AttackMethodConfig {
                name: "score".into(),
                method: MethodKind::Score,
                victim: None,
                steps: None,
                budget: None,
                attack: AttackConfig::default(),
            },
            AttackMethodConfig {
                name: "score-query".into(),
                method: MethodKind::ScoreQuery,
                victim: Some("unet".into()),
                steps: None,
                budget: None,
                attack: AttackConfig::query_default(),
            },
            AttackMethodConfig {
                name: "noise-control".into(),
                method: MethodKind::NoiseControl,
                victim: None,
                steps: Some(100),
                budget: None,
                attack: AttackConfig::default(),
            },
            AttackMethodConfig {
                name: "pgd-unet".into(),
                method: MethodKind::Pgd,
                victim: Some("unet".into()),
                steps: Some(10),
                budget: None,
                attack: AttackConfig::default(),
            },
        ],
        seeds: vec![1, 2, 3],
        output_dir: output.to_path_buf(),
        cache_dir: None,
    }
}
