//! Command-line front end: dataset generation, training, attack generation,
//! evaluation and experiment orchestration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scorebreak::attack::{
    fgsm, gaussian_noise_control, pgd, random_query_attack, run_attack, AlphaMode, AttackConfig,
    TimestepMap,
};
use scorebreak::bench::{self, ExperimentConfig, SweepParam};
use scorebreak::data::{self, Sample, Split, SyntheticSpec};
use scorebreak::error::{Error, Result};
use scorebreak::metrics::{self, MetricReport};
use scorebreak::schedule::ScheduleSpec;
use scorebreak::scorenet::{ScoreNetCheckpoint, ScoreNetTrainer, TrainingConfig};
use scorebreak::tensor::{ImageTensor, ValueRange};
use scorebreak::victim::{
    train_victim, LossGradient, QueryTarget, TrainedVictim, VictimArch, VictimHyperparams,
    VictimSpec,
};

#[derive(Parser)]
#[command(name = "scorebreak", version, about = "Score-driven adversarial attacks for segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired image/mask corpus.
    GenData(GenDataArgs),
    /// Train the conditional/unconditional score network.
    TrainScore(TrainScoreArgs),
    /// Train a toy victim segmenter.
    TrainVictim(TrainVictimArgs),
    /// Generate adversarial samples for one split.
    Attack(AttackArgs),
    /// Evaluate a victim on clean or adversarial images.
    Evaluate(EvaluateArgs),
    /// Run a config-driven experiment (training, attacks, metrics, plots).
    Run(RunArgs),
    /// Sweep omega or m-max over a config-driven experiment.
    Sweep(SweepArgs),
    /// Re-print the aggregate table of a finished run directory.
    Report(ReportArgs),
    /// Write a ready-to-edit experiment config.
    InitConfig(InitConfigArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// TOML file holding a synthetic spec; defaults are used when absent.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainScoreArgs {
    /// Dataset root (must contain a manifest).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    base_width: Option<usize>,
    /// Diffusion steps T.
    #[arg(long, default_value_t = 1000)]
    schedule_steps: usize,
    /// Write intermediate checkpoints every N steps.
    #[arg(long)]
    save_every: Option<usize>,
}

#[derive(Args)]
struct TrainVictimArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    arch: ArchArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    base_width: Option<usize>,
    /// Clean-mIoU gate on the eval split.
    #[arg(long)]
    gate_miou: Option<f64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum ArchArg {
    MiniUnet,
    Dilated,
}

impl From<ArchArg> for VictimArch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::MiniUnet => VictimArch::MiniUnet,
            ArchArg::Dilated => VictimArch::Dilated,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Score,
    ScoreQuery,
    Fgsm,
    Pgd,
    RandomQuery,
    NoiseControl,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
    split: SplitArg,
    /// l-inf budget as a fraction of the value range, e.g. 8/255.
    #[arg(long, default_value = "8/255", value_parser = parse_fraction)]
    epsilon: f64,
    /// Step size as a fraction of the value range, e.g. 2/255.
    #[arg(long, default_value = "2/255", value_parser = parse_fraction)]
    mu: f64,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long, default_value_t = 90.0)]
    omega: f64,
    /// head | spread | fixed:<t>
    #[arg(long, default_value = "head", value_parser = parse_t_map)]
    t_map: TimestepMap,
    #[arg(long, value_enum, default_value_t = AlphaModeArg::PerStep)]
    alpha_mode: AlphaModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score-net checkpoint (score / score-query methods).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Victim checkpoint (query and white-box methods).
    #[arg(long)]
    victim: Option<PathBuf>,
    /// PGD / noise-control iteration count.
    #[arg(long)]
    steps: Option<usize>,
    /// random-query budget.
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum AlphaModeArg {
    PerStep,
    Cumulative,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum SplitArg {
    ScoreTrain,
    VictimTrain,
    Eval,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::ScoreTrain => Split::ScoreTrain,
            SplitArg::VictimTrain => Split::VictimTrain,
            SplitArg::Eval => Split::Eval,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    victim: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
    split: SplitArg,
    /// Directory of adversarial images from `attack`; clean images when
    /// absent.
    #[arg(long)]
    adv: Option<PathBuf>,
    /// Output stem; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    param: SweepParamArg,
    /// Comma-separated values, e.g. 50,90,150.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum SweepParamArg {
    Omega,
    MMax,
}

#[derive(Args)]
struct ReportArgs {
    /// A run directory containing aggregate.csv.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
struct InitConfigArgs {
    #[arg(long)]
    out: PathBuf,
    /// Dataset root the config will point at.
    #[arg(long, default_value = "data")]
    data: PathBuf,
    /// Output directory the config will point at.
    #[arg(long, default_value = "runs/exp")]
    results: PathBuf,
}

fn parse_fraction(text: &str) -> std::result::Result<f64, String> {
    let v = match text.split_once('/') {
        Some((num, den)) => {
            let n: f64 = num.trim().parse().map_err(|e| format!("{e}"))?;
            let d: f64 = den.trim().parse().map_err(|e| format!("{e}"))?;
            if d == 0.0 {
                return Err("denominator is zero".into());
            }
            n / d
        }
        None => text.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("fraction {v} outside [0, 1]"));
    }
    Ok(v)
}

fn parse_t_map(text: &str) -> std::result::Result<TimestepMap, String> {
    match text {
        "head" => Ok(TimestepMap::Head),
        "spread" => Ok(TimestepMap::LinearSpread),
        other => match other.strip_prefix("fixed:") {
            Some(t) => t
                .parse()
                .map(TimestepMap::Fixed)
                .map_err(|e| format!("{e}")),
            None => Err(format!("unknown t-map `{other}` (head|spread|fixed:<t>)")),
        },
    }
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::TrainScore(args) => cmd_train_score(args),
        Command::TrainVictim(args) => cmd_train_victim(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Run(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let record = bench::run_experiment(&cfg)?;
            print!("{}", record.aggregate_csv());
            println!(
                "run {} finished in {:.1}s; artifacts in {}",
                record.config_hash,
                record.wall_clock_secs,
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let cfg = ExperimentConfig::load(&args.config)?;
            let param = match args.param {
                SweepParamArg::Omega => SweepParam::Omega,
                SweepParamArg::MMax => SweepParam::MMax,
            };
            let records = bench::sweep(&cfg, param, &args.values)?;
            for (record, value) in records.iter().zip(&args.values) {
                println!("== {} = {value}", param.as_str());
                print!("{}", record.aggregate_csv());
            }
            Ok(())
        }
        Command::Report(args) => cmd_report(args),
        Command::InitConfig(args) => {
            let cfg = bench::template_config(&args.data, &args.results);
            let text =
                toml::to_string_pretty(&cfg).map_err(|e| Error::Serialize(e.to_string()))?;
            std::fs::write(&args.out, text)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let spec: SyntheticSpec = match &args.spec {
        Some(path) => toml::from_str(&std::fs::read_to_string(path)?)?,
        None => SyntheticSpec::default(),
    };
    let manifest = data::generate(&spec, args.seed, &args.out)?;
    println!(
        "generated {} samples under {}",
        manifest.samples.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train_score(args: TrainScoreArgs) -> Result<()> {
    let manifest = data::read_manifest(&args.data)?;
    let spec = &manifest.header.spec;
    let mut cfg = TrainingConfig {
        image_size: spec.image_size,
        image_channels: spec.channels,
        condition_channels: scorebreak::tensor::condition_channels(spec.num_classes),
        ..Default::default()
    };
    if let Some(v) = args.steps {
        cfg.max_steps = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.base_width {
        cfg.base_width = v;
    }
    let sched_spec = ScheduleSpec {
        steps: args.schedule_steps,
        ..Default::default()
    };
    let samples = data::load_split(&manifest, Split::ScoreTrain)?;
    let pairs = data::split_pairs(&samples);
    let mut trainer = ScoreNetTrainer::new(cfg.clone(), sched_spec, args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x5c0e);

    let save_every = args.save_every.unwrap_or(usize::MAX).max(1);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut cursor = pairs.len();
    use rand::Rng;
    for step in 1..=cfg.max_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor >= order.len() {
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                cursor = 0;
            }
            batch.push(pairs[order[cursor]].clone());
            cursor += 1;
        }
        let out = trainer.train_step(&batch, &mut rng)?;
        if step % 200 == 0 || step == cfg.max_steps {
            println!("step {step}/{}: loss {:.5}", cfg.max_steps, out.loss);
        }
        if step % save_every == 0 && step != cfg.max_steps {
            let path = args.out.with_extension(format!("step{step}.ckpt"));
            trainer.checkpoint().save(&path)?;
        }
    }
    trainer.checkpoint().save(&args.out)?;
    println!("saved {}", args.out.display());
    Ok(())
}

fn cmd_train_victim(args: TrainVictimArgs) -> Result<()> {
    let manifest = data::read_manifest(&args.data)?;
    let train = data::split_pairs(&data::load_split(&manifest, Split::VictimTrain)?);
    let val = data::split_pairs(&data::load_split(&manifest, Split::Eval)?);
    let mut hp = VictimHyperparams::default();
    if let Some(v) = args.steps {
        hp.max_steps = v;
    }
    if let Some(v) = args.base_width {
        hp.base_width = v;
    }
    if let Some(v) = args.gate_miou {
        hp.gate_miou = v;
    }
    let spec = VictimSpec {
        arch: args.arch.into(),
        split_id: Split::VictimTrain.as_str().to_string(),
        seed: args.seed,
    };
    let trained = train_victim(&spec, &train, &val, &hp)?;
    trained.save(&args.out)?;
    println!(
        "saved {} (clean mIoU {:.4}, gate {})",
        args.out.display(),
        trained.clean_miou,
        if trained.gate_passed { "passed" } else { "FAILED" }
    );
    if !trained.gate_passed {
        return Err(Error::GateFailed {
            miou: trained.clean_miou,
            required: hp.gate_miou,
        });
    }
    Ok(())
}

fn save_image(path: &Path, x: &ImageTensor) -> Result<()> {
    use image::codecs::png::PngEncoder;
    use image::{ExtendedColorType, ImageEncoder};
    let (h, w, c) = x.dim();
    let mut bytes = Vec::with_capacity(h * w * c);
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let v = (x.data()[(i, j, ch)].clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0;
                bytes.push(v.round() as u8);
            }
        }
    }
    let color = match c {
        1 => ExtendedColorType::L8,
        3 => ExtendedColorType::Rgb8,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unsupported channel count {other}"
            )))
        }
    };
    let file = std::fs::File::create(path)?;
    PngEncoder::new(std::io::BufWriter::new(file)).write_image(&bytes, w as u32, h as u32, color)?;
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let manifest = data::read_manifest(&args.data)?;
    let samples = data::load_split(&manifest, args.split.into())?;
    std::fs::create_dir_all(&args.out)?;

    let attack_cfg = AttackConfig {
        epsilon: args.epsilon,
        mu: args.mu,
        m_max: args.m_max.unwrap_or(match args.method {
            MethodArg::ScoreQuery => 100,
            _ => 30,
        }),
        omega: args.omega,
        t_map: args.t_map,
        alpha_mode: match args.alpha_mode {
            AlphaModeArg::PerStep => AlphaMode::PerStep,
            AlphaModeArg::Cumulative => AlphaMode::Cumulative,
        },
        query_enabled: matches!(args.method, MethodArg::ScoreQuery),
    };

    let score_ckpt = match args.method {
        MethodArg::Score | MethodArg::ScoreQuery => {
            let path = args.checkpoint.as_ref().ok_or_else(|| {
                Error::InvalidConfig("score methods need --checkpoint".into())
            })?;
            Some(ScoreNetCheckpoint::load(path)?)
        }
        _ => None,
    };
    let oracle = score_ckpt.as_ref().map(|c| c.as_oracle()).transpose()?;
    let sched = score_ckpt
        .as_ref()
        .map(|c| c.schedule)
        .unwrap_or_default()
        .build()?;

    let victim = match args.method {
        MethodArg::ScoreQuery | MethodArg::Fgsm | MethodArg::Pgd | MethodArg::RandomQuery => {
            let path = args.victim.as_ref().ok_or_else(|| {
                Error::InvalidConfig("this method needs --victim".into())
            })?;
            Some(TrainedVictim::load(path)?)
        }
        _ => None,
    };

    let records_path = args.out.join("records.jsonl");
    let mut records = std::io::BufWriter::new(std::fs::File::create(&records_path)?);
    for (idx, sample) in samples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(idx as u64);
        let (x_adv, queries, best_loss): (ImageTensor, usize, Option<f64>) = match args.method {
            MethodArg::Score => {
                let r = run_attack(
                    oracle.as_ref().unwrap(),
                    &sample.image,
                    &sample.mask,
                    &attack_cfg,
                    &sched,
                    None,
                )?;
                (r.x_adv, 0, None)
            }
            MethodArg::ScoreQuery => {
                let v = victim.as_ref().unwrap();
                let r = run_attack(
                    oracle.as_ref().unwrap(),
                    &sample.image,
                    &sample.mask,
                    &attack_cfg,
                    &sched,
                    Some(&v.victim as &dyn QueryTarget),
                )?;
                (r.x_adv, r.queries_used, r.best_query_loss)
            }
            MethodArg::Fgsm => {
                let v = victim.as_ref().unwrap();
                (
                    fgsm(
                        &v.victim as &dyn LossGradient,
                        &sample.image,
                        &sample.mask,
                        args.epsilon,
                    )?,
                    0,
                    None,
                )
            }
            MethodArg::Pgd => {
                let v = victim.as_ref().unwrap();
                (
                    pgd(
                        &v.victim as &dyn LossGradient,
                        &sample.image,
                        &sample.mask,
                        args.epsilon,
                        args.mu,
                        args.steps.unwrap_or(10),
                    )?,
                    0,
                    None,
                )
            }
            MethodArg::RandomQuery => {
                let v = victim.as_ref().unwrap();
                let r = random_query_attack(
                    &v.victim as &dyn QueryTarget,
                    &sample.image,
                    &sample.mask,
                    args.epsilon,
                    args.budget,
                    &mut rng,
                )?;
                (r.x_adv, r.queries_used, r.best_query_loss)
            }
            MethodArg::NoiseControl => (
                gaussian_noise_control(
                    &sample.image,
                    args.epsilon,
                    args.mu,
                    args.steps.unwrap_or(100),
                    &mut rng,
                )?,
                0,
                None,
            ),
        };
        let linf = x_adv.max_abs_diff(&sample.image);
        save_image(&args.out.join(format!("{}.adv.img", sample.id)), &x_adv)?;
        writeln!(
            records,
            "{}",
            serde_json::json!({
                "id": sample.id,
                "linf": linf,
                "queries": queries,
                "best_query_loss": best_loss,
            })
        )?;
    }
    records.flush()?;
    println!(
        "wrote {} adversarial samples and {}",
        samples.len(),
        records_path.display()
    );
    Ok(())
}

fn load_adv_images(dir: &Path, samples: &[Sample]) -> Result<Vec<ImageTensor>> {
    use image::ImageReader;
    samples
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.adv.img", s.id));
            let img = ImageReader::open(&path)
                .map_err(|e| Error::Dataset {
                    id: s.id.clone(),
                    message: format!("missing adversarial image: {e}"),
                })?
                .with_guessed_format()?
                .decode()?;
            let (h, w, c) = s.image.dim();
            let data = match c {
                1 => {
                    let gray = img.into_luma8();
                    ndarray::Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
                        gray.get_pixel(j as u32, i as u32).0[0] as f64 / 255.0 * 2.0 - 1.0
                    })
                }
                _ => {
                    let rgb = img.into_rgb8();
                    ndarray::Array3::from_shape_fn((h, w, 3), |(i, j, ch)| {
                        rgb.get_pixel(j as u32, i as u32).0[ch] as f64 / 255.0 * 2.0 - 1.0
                    })
                }
            };
            Ok(ImageTensor::new(data, ValueRange::UNIT))
        })
        .collect()
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let manifest = data::read_manifest(&args.data)?;
    let samples = data::load_split(&manifest, args.split.into())?;
    let trained = TrainedVictim::load(&args.victim)?;
    let images: Vec<ImageTensor> = match &args.adv {
        Some(dir) => load_adv_images(dir, &samples)?,
        None => samples.iter().map(|s| s.image.clone()).collect(),
    };
    let num_classes = manifest.header.spec.num_classes;
    let mut report = MetricReport::default();
    for (sample, x) in samples.iter().zip(&images) {
        let pred = trained.victim.predict(x)?;
        let values: BTreeMap<String, f64> = if num_classes == 2 {
            metrics::binary_metrics(&pred.binary_prob()?, &sample.mask.foreground())?
        } else {
            metrics::multiclass_metrics(&pred.class_map(), sample.mask.labels(), num_classes)?
        };
        report.push(sample.id.clone(), values);
    }
    let csv_path = args.out.with_extension("csv");
    let file = std::fs::File::create(&csv_path)?;
    report.write_csv(file)?;
    let json_path = args.out.with_extension("json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report.summary_json())?,
    )?;
    println!("means: {}", serde_json::to_string(&report.means())?);
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let path = args.run.join("aggregate.csv");
    let text = std::fs::read_to_string(&path)?;
    print!("{text}");
    let summary = args.run.join("summary.json");
    if summary.exists() {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary)?)?;
        if let Some(hash) = v.get("config_hash") {
            println!("config hash: {hash}");
        }
    }
    Ok(())
}
