//! Synthetic paired image/mask corpus and on-disk dataset IO.
//!
//! Images are Gaussian textures whose per-pixel mean is set by the mask
//! class; masks come from a small shape family. Layout on disk:
//! `{root}/{split}/{id}.img`, `{root}/{split}/{id}.mask` (both PNG payloads)
//! and a line-delimited `{root}/manifest` whose first line is the header.
//! Generation is deterministic per seed; splits are pairwise disjoint by
//! construction.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::GaussianMixtureSpec;
use crate::tensor::{ImageTensor, MaskTensor, ValueRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Ellipses,
    Rectangles,
    Blobs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    ScoreTrain,
    VictimTrain,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::ScoreTrain, Split::VictimTrain, Split::Eval];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::ScoreTrain => "score-train",
            Split::VictimTrain => "victim-train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub score_train: usize,
    pub victim_train: usize,
    pub eval: usize,
}

impl SplitCounts {
    fn get(&self, split: Split) -> usize {
        match split {
            Split::ScoreTrain => self.score_train,
            Split::VictimTrain => self.victim_train,
            Split::Eval => self.eval,
        }
    }
}

/// Generator parameters for the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub image_size: (usize, usize),
    pub channels: usize,
    /// Segmentation classes; 2 is the binary task.
    pub num_classes: usize,
    pub shape_family: ShapeFamily,
    /// Per-class per-channel texture means in [-1, 1].
    pub class_means: Vec<Vec<f64>>,
    /// Texture standard deviation.
    pub sigma: f64,
    pub counts: SplitCounts,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            image_size: (32, 32),
            channels: 3,
            num_classes: 2,
            shape_family: ShapeFamily::Ellipses,
            // Per-channel separation of 2 sigma between background and
            // foreground texture.
            class_means: vec![vec![-0.3, -0.25, -0.35], vec![0.3, 0.35, 0.25]],
            sigma: 0.3,
            counts: SplitCounts {
                score_train: 48,
                victim_train: 48,
                eval: 24,
            },
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("need at least 2 classes".into()));
        }
        if self.class_means.len() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "{} class means for {} classes",
                self.class_means.len(),
                self.num_classes
            )));
        }
        if self.class_means.iter().any(|m| m.len() != self.channels) {
            return Err(Error::InvalidConfig(
                "class means must have one entry per channel".into(),
            ));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidConfig("sigma must be positive".into()));
        }
        if self.counts.score_train.min(self.counts.victim_train).min(self.counts.eval) == 0 {
            return Err(Error::InvalidConfig(
                "every split needs at least one sample".into(),
            ));
        }
        Ok(())
    }

    /// The matching closed-form pixel-class mixture (uniform class prior).
    pub fn mixture_spec(&self) -> Result<GaussianMixtureSpec> {
        let weights = vec![1.0 / self.num_classes as f64; self.num_classes];
        GaussianMixtureSpec::from_channel_means(
            &self.class_means,
            &weights,
            self.sigma * self.sigma,
            self.image_size.0,
            self.image_size.1,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub split: Split,
}

/// Manifest header (first line of the manifest file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub seed: u64,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub samples: Vec<SampleEntry>,
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Checkable from the manifest alone: splits are pairwise disjoint and
    /// every id appears exactly once.
    pub fn splits_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.samples.iter().all(|s| seen.insert(&s.id))
    }

    pub fn manifest_path(root: &Path) -> PathBuf {
        root.join("manifest")
    }
}

fn sample_mask<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Array2<u8> {
    let (h, w) = spec.image_size;
    let mut labels = Array2::<u8>::zeros((h, w));
    // One shape per non-background class.
    for class in 1..spec.num_classes {
        let cy = rng.random_range(0.25 * h as f64..0.75 * h as f64);
        let cx = rng.random_range(0.25 * w as f64..0.75 * w as f64);
        match spec.shape_family {
            ShapeFamily::Ellipses => {
                let ry = rng.random_range(0.15 * h as f64..0.4 * h as f64);
                let rx = rng.random_range(0.15 * w as f64..0.4 * w as f64);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (sin, cos) = angle.sin_cos();
                for ((i, j), v) in labels.indexed_iter_mut() {
                    let dy = i as f64 - cy;
                    let dx = j as f64 - cx;
                    let u = cos * dx + sin * dy;
                    let t = -sin * dx + cos * dy;
                    if (u / rx).powi(2) + (t / ry).powi(2) <= 1.0 {
                        *v = class as u8;
                    }
                }
            }
            ShapeFamily::Rectangles => {
                let hy = rng.random_range(0.1 * h as f64..0.35 * h as f64);
                let hx = rng.random_range(0.1 * w as f64..0.35 * w as f64);
                for ((i, j), v) in labels.indexed_iter_mut() {
                    if (i as f64 - cy).abs() <= hy && (j as f64 - cx).abs() <= hx {
                        *v = class as u8;
                    }
                }
            }
            ShapeFamily::Blobs => {
                // Union of a few random disks around the anchor.
                let disks: Vec<(f64, f64, f64)> = (0..4)
                    .map(|_| {
                        (
                            cy + rng.random_range(-0.2 * h as f64..0.2 * h as f64),
                            cx + rng.random_range(-0.2 * w as f64..0.2 * w as f64),
                            rng.random_range(0.1 * h.min(w) as f64..0.25 * h.min(w) as f64),
                        )
                    })
                    .collect();
                for ((i, j), v) in labels.indexed_iter_mut() {
                    for &(dy, dx, r) in &disks {
                        if (i as f64 - dy).powi(2) + (j as f64 - dx).powi(2) <= r * r {
                            *v = class as u8;
                            break;
                        }
                    }
                }
            }
        }
    }
    labels
}

fn sample_image<R: Rng>(spec: &SyntheticSpec, labels: &Array2<u8>, rng: &mut R) -> Array3<u8> {
    let (h, w) = spec.image_size;
    let mut out = Array3::<u8>::zeros((h, w, spec.channels));
    for i in 0..h {
        for j in 0..w {
            let means = &spec.class_means[labels[(i, j)] as usize];
            for c in 0..spec.channels {
                let v = means[c] + spec.sigma * rng.sample::<f64, _>(StandardNormal);
                let clipped = v.clamp(-1.0, 1.0);
                // [-1, 1] -> 8-bit.
                out[(i, j, c)] = ((clipped + 1.0) / 2.0 * 255.0).round() as u8;
            }
        }
    }
    out
}

fn write_png(path: &Path, bytes: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let encoder = PngEncoder::new(std::io::BufWriter::new(file));
    encoder.write_image(bytes, w, h, color)?;
    Ok(())
}

/// Generate the corpus under `root`, deterministically in `seed`.
pub fn generate(spec: &SyntheticSpec, seed: u64, root: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let (h, w) = spec.image_size;
    let mut samples = Vec::new();
    let mut stream = 0u64;
    for split in Split::ALL {
        let dir = root.join(split.as_str());
        std::fs::create_dir_all(&dir)?;
        for idx in 0..spec.counts.get(split) {
            let id = format!("{}-{idx:04}", split.as_str());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            let labels = sample_mask(spec, &mut rng);
            let image = sample_image(spec, &labels, &mut rng);

            let img_bytes: Vec<u8> = image.iter().copied().collect();
            let color = match spec.channels {
                1 => ExtendedColorType::L8,
                3 => ExtendedColorType::Rgb8,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unsupported channel count {other} (1 or 3)"
                    )))
                }
            };
            write_png(&dir.join(format!("{id}.img")), &img_bytes, w as u32, h as u32, color)?;
            let mask_bytes: Vec<u8> = labels.iter().copied().collect();
            write_png(
                &dir.join(format!("{id}.mask")),
                &mask_bytes,
                w as u32,
                h as u32,
                ExtendedColorType::L8,
            )?;
            samples.push(SampleEntry { id, split });
        }
    }
    let header = ManifestHeader {
        version: 1,
        seed,
        spec: spec.clone(),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(DatasetManifest::manifest_path(
        root,
    ))?);
    writeln!(file, "{}", serde_json::to_string(&header)?)?;
    for s in &samples {
        writeln!(file, "{}", serde_json::to_string(s)?)?;
    }
    file.flush()?;
    Ok(DatasetManifest {
        header,
        samples,
        root: root.to_path_buf(),
    })
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = DatasetManifest::manifest_path(root);
    let file = std::io::BufReader::new(std::fs::File::open(&path)?);
    let mut lines = file.lines();
    let header: ManifestHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::Dataset {
            id: path.display().to_string(),
            message: "empty manifest".into(),
        }),
    };
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(&line)?);
    }
    Ok(DatasetManifest {
        header,
        samples,
        root: root.to_path_buf(),
    })
}

/// One loaded sample: normalized image in [-1, 1] and its mask.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: ImageTensor,
    pub mask: MaskTensor,
}

fn load_png_gray(path: &Path) -> Result<(Vec<u8>, u32, u32)> {
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()?
        .into_luma8();
    let (w, h) = img.dimensions();
    Ok((img.into_raw(), w, h))
}

/// Load every sample of a split, validating sizes and mask labels.
pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<Sample>> {
    let spec = &manifest.header.spec;
    let (h, w) = spec.image_size;
    let dir = manifest.root.join(split.as_str());
    let mut out = Vec::new();
    for entry in manifest.samples.iter().filter(|s| s.split == split) {
        let id = &entry.id;
        let fail = |message: String| Error::Dataset {
            id: id.clone(),
            message,
        };
        let img_path = dir.join(format!("{id}.img"));
        let image = ImageReader::open(&img_path)
            .map_err(|e| fail(format!("missing image file: {e}")))?
            .with_guessed_format()
            .map_err(|e| fail(format!("unreadable image: {e}")))?
            .decode()
            .map_err(|e| fail(format!("corrupt image: {e}")))?;
        let (iw, ih) = (image.width() as usize, image.height() as usize);
        if (ih, iw) != (h, w) {
            return Err(fail(format!("image is {ih}x{iw}, expected {h}x{w}")));
        }
        let data = match spec.channels {
            1 => {
                let gray = image.into_luma8();
                Array3::from_shape_fn((h, w, 1), |(i, j, _)| {
                    gray.get_pixel(j as u32, i as u32).0[0] as f64 / 255.0 * 2.0 - 1.0
                })
            }
            3 => {
                let rgb = image.into_rgb8();
                Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
                    rgb.get_pixel(j as u32, i as u32).0[c] as f64 / 255.0 * 2.0 - 1.0
                })
            }
            other => return Err(fail(format!("unsupported channel count {other}"))),
        };
        let (mask_raw, mw, mh) = load_png_gray(&dir.join(format!("{id}.mask")))
            .map_err(|e| fail(format!("mask: {e}")))?;
        if (mh as usize, mw as usize) != (h, w) {
            return Err(fail(format!("mask is {mh}x{mw}, expected {h}x{w}")));
        }
        let labels = Array2::from_shape_vec((h, w), mask_raw)
            .map_err(|e| fail(format!("mask layout: {e}")))?;
        let mask = MaskTensor::new(labels, spec.num_classes).map_err(|e| {
            fail(format!("invalid mask labels: {e}"))
        })?;
        out.push(Sample {
            id: id.clone(),
            image: ImageTensor::new(data, ValueRange::UNIT),
            mask,
        });
    }
    Ok(out)
}

/// Convenience pairs for training loops.
pub fn split_pairs(samples: &[Sample]) -> Vec<(ImageTensor, MaskTensor)> {
    samples
        .iter()
        .map(|s| (s.image.clone(), s.mask.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::victim::{bayes_victim, QueryTarget};
    use sha2::{Digest, Sha256};

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            image_size: (16, 16),
            channels: 1,
            class_means: vec![vec![-0.3], vec![0.3]],
            counts: SplitCounts {
                score_train: 3,
                victim_train: 3,
                eval: 2,
            },
            ..Default::default()
        }
    }

    fn corpus_digest(root: &Path) -> String {
        let mut paths = Vec::new();
        for entry in walk(root) {
            paths.push(entry);
        }
        paths.sort();
        let mut hasher = Sha256::new();
        for p in paths {
            hasher.update(p.to_string_lossy().as_bytes());
            hasher.update(std::fs::read(&p).unwrap());
        }
        format!("{:x}", hasher.finalize())
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
        out
    }

    #[test]
    fn same_seed_gives_byte_identical_corpus() {
        let spec = tiny_spec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(&spec, 42, d1.path()).unwrap();
        generate(&spec, 42, d2.path()).unwrap();
        assert_eq!(
            std::fs::read(DatasetManifest::manifest_path(d1.path())).unwrap(),
            std::fs::read(DatasetManifest::manifest_path(d2.path())).unwrap()
        );
        // Hash of file contents (paths differ by tempdir, compare by name).
        let h1: Vec<_> = walk(d1.path())
            .into_iter()
            .map(|p| {
                let mut hasher = Sha256::new();
                hasher.update(std::fs::read(&p).unwrap());
                (p.file_name().unwrap().to_owned(), format!("{:x}", hasher.finalize()))
            })
            .collect();
        let h2: Vec<_> = walk(d2.path())
            .into_iter()
            .map(|p| {
                let mut hasher = Sha256::new();
                hasher.update(std::fs::read(&p).unwrap());
                (p.file_name().unwrap().to_owned(), format!("{:x}", hasher.finalize()))
            })
            .collect();
        let mut h1 = h1;
        let mut h2 = h2;
        h1.sort();
        h2.sort();
        assert_eq!(h1, h2);
        // Different seed changes the corpus.
        let d3 = tempfile::tempdir().unwrap();
        generate(&spec, 43, d3.path()).unwrap();
        assert_ne!(corpus_digest(d1.path()), corpus_digest(d3.path()));
    }

    #[test]
    fn binary_masks_contain_exactly_zero_and_one() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 7, dir.path()).unwrap();
        let samples = load_split(&manifest, Split::ScoreTrain).unwrap();
        let mut seen = BTreeSet::new();
        for s in &samples {
            for &v in s.mask.labels() {
                seen.insert(v);
            }
        }
        assert!(seen.contains(&0) && seen.contains(&1));
        assert!(seen.iter().all(|&v| v <= 1));
    }

    #[test]
    fn round_trip_matches_within_quantization() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 11, dir.path()).unwrap();
        // Regenerate the in-memory tensors with the same per-sample streams.
        let samples = load_split(&manifest, Split::Eval).unwrap();
        // Stream ids are allocated in Split::ALL order.
        let offset = spec.counts.score_train + spec.counts.victim_train;
        for (idx, sample) in samples.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream((offset + idx) as u64);
            let labels = sample_mask(&spec, &mut rng);
            assert_eq!(&labels, sample.mask.labels(), "mask mismatch {}", sample.id);
            let mut max_err = 0.0f64;
            let mut check_rng = rng;
            for i in 0..16 {
                for j in 0..16 {
                    let mean = spec.class_means[labels[(i, j)] as usize][0];
                    let v = (mean + spec.sigma * check_rng.sample::<f64, _>(StandardNormal))
                        .clamp(-1.0, 1.0);
                    max_err = max_err.max((v - sample.image.data()[(i, j, 0)]).abs());
                }
            }
            assert!(
                max_err <= 1.0 / 255.0 + 1e-12,
                "{}: quantization error {max_err}",
                sample.id
            );
        }
    }

    #[test]
    fn splits_are_disjoint_and_loadable() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 3, dir.path()).unwrap();
        assert!(manifest.splits_disjoint());
        let reread = read_manifest(dir.path()).unwrap();
        assert_eq!(reread, manifest);
        for split in Split::ALL {
            let samples = load_split(&reread, split).unwrap();
            assert_eq!(samples.len(), match split {
                Split::ScoreTrain | Split::VictimTrain => 3,
                Split::Eval => 2,
            });
        }
    }

    #[test]
    fn empty_split_is_fine_but_zero_counts_rejected() {
        let mut spec = tiny_spec();
        spec.counts.eval = 0;
        assert!(spec.validate().is_err());
        // An empty *filter* (no matching entries) yields an empty iterator.
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = generate(&spec, 5, dir.path()).unwrap();
        manifest.samples.retain(|s| s.split != Split::Eval);
        let samples = load_split(&manifest, Split::Eval).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn out_of_range_mask_label_rejected_with_id() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 9, dir.path()).unwrap();
        // Corrupt one mask with an illegal class id.
        let victim_id = manifest.ids(Split::Eval)[0].to_string();
        let path = dir
            .path()
            .join(Split::Eval.as_str())
            .join(format!("{victim_id}.mask"));
        let bad = vec![9u8; 16 * 16];
        write_png(&path, &bad, 16, 16, ExtendedColorType::L8).unwrap();
        let err = load_split(&manifest, Split::Eval).unwrap_err();
        assert!(err.to_string().contains(&victim_id), "{err}");
    }

    #[test]
    fn missing_file_reported_with_id() {
        let spec = tiny_spec();
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 13, dir.path()).unwrap();
        let id = manifest.ids(Split::Eval)[0].to_string();
        std::fs::remove_file(
            dir.path()
                .join(Split::Eval.as_str())
                .join(format!("{id}.img")),
        )
        .unwrap();
        let err = load_split(&manifest, Split::Eval).unwrap_err();
        assert!(err.to_string().contains(&id));
    }

    #[test]
    fn well_separated_corpus_scores_high_bayes_miou() {
        // Per-channel mean separation of 2 sigma across 3 channels gives the
        // closed-form victim a clean mIoU above 0.9.
        let spec = SyntheticSpec {
            counts: SplitCounts {
                score_train: 1,
                victim_train: 1,
                eval: 12,
            },
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate(&spec, 21, dir.path()).unwrap();
        let samples = load_split(&manifest, Split::Eval).unwrap();
        let victim = bayes_victim(&spec.mixture_spec().unwrap());
        let mut total = 0.0;
        for s in &samples {
            let pred = victim.predict(&s.image).unwrap();
            let (miou, _) =
                crate::metrics::miou_acc(&pred.class_map(), s.mask.labels(), 2).unwrap();
            total += miou;
        }
        let mean = total / samples.len() as f64;
        assert!(mean > 0.9, "bayes clean mIoU {mean}");
    }
}
