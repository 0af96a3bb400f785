//! Core tensor types: images, ground-truth masks and condition maps.
//!
//! Images are H×W×C arrays of `f64` with a declared value range (the range
//! that clipping operations target; intermediate noisy samples may exceed
//! it). Masks store per-pixel class ids and convert to condition maps in
//! [-0.5, 0.5]. The unconditional sentinel is the constant -1 map.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive pixel value range an image is interpreted against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    /// Zero-centered unit range used for all internal image data.
    pub const UNIT: ValueRange = ValueRange {
        min: -1.0,
        max: 1.0,
    };

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

impl Default for ValueRange {
    fn default() -> Self {
        Self::UNIT
    }
}

/// An H×W×C pixel array together with its declared value range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    data: Array3<f64>,
    range: ValueRange,
}

impl ImageTensor {
    pub fn new(data: Array3<f64>, range: ValueRange) -> Self {
        Self { data, range }
    }

    /// All-zero image in the unit range.
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self::new(Array3::zeros((h, w, c)), ValueRange::UNIT)
    }

    pub fn from_fn(
        h: usize,
        w: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        Self::new(
            Array3::from_shape_fn((h, w, c), |(i, j, k)| f(i, j, k)),
            ValueRange::UNIT,
        )
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    /// (height, width, channels)
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.data.dim() == other.data.dim()
    }

    /// Elementwise map preserving shape and range.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::new(self.data.mapv(|v| f(v)), self.range)
    }

    /// Clamp every element to the declared range.
    pub fn clip_to_range(&self) -> Self {
        let r = self.range;
        self.map(|v| r.clamp(v))
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_err(&self, other: &ImageTensor) -> Error {
        Error::ShapeMismatch {
            expected: format!("{:?}", self.data.dim()),
            got: format!("{:?}", other.data.dim()),
        }
    }

    /// Elementwise combination of two equally-shaped images.
    pub fn zip_with(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(self.shape_err(other));
        }
        let mut out = self.data.clone();
        out.zip_mut_with(&other.data, |a, &b| *a = f(*a, b));
        Ok(Self::new(out, self.range))
    }
}

/// Per-pixel ground-truth class ids plus the task's class count.
///
/// Binary tasks have `num_classes == 2` and condition on a single channel;
/// multi-class tasks condition on one one-hot channel per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTensor {
    labels: Array2<u8>,
    num_classes: usize,
}

impl MaskTensor {
    pub fn new(labels: Array2<u8>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "mask needs at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&v) = labels.iter().find(|&&v| (v as usize) >= num_classes) {
            return Err(Error::InvalidCondition(format!(
                "mask label {v} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// (height, width)
    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Number of condition channels this mask normalizes into.
    pub fn condition_channels(&self) -> usize {
        condition_channels(self.num_classes)
    }

    /// Binary foreground map (class != 0) as 0/1 doubles.
    pub fn foreground(&self) -> Array2<f64> {
        self.labels.mapv(|v| if v == 0 { 0.0 } else { 1.0 })
    }

    /// Normalize into a condition map in [-0.5, 0.5].
    ///
    /// Binary: one channel, {0,1} -> {-0.5,+0.5}. Multi-class: one-hot over
    /// `num_classes` channels mapped the same way.
    pub fn to_condition(&self) -> ConditionMap {
        let (h, w) = self.labels.dim();
        let k = self.condition_channels();
        let mut values = Array3::from_elem((h, w, k), -0.5);
        for ((i, j), &label) in self.labels.indexed_iter() {
            if k == 1 {
                if label != 0 {
                    values[(i, j, 0)] = 0.5;
                }
            } else {
                values[(i, j, label as usize)] = 0.5;
            }
        }
        ConditionMap::Conditional(values)
    }
}

/// Condition channel count for a class count: binary tasks use one channel.
pub fn condition_channels(num_classes: usize) -> usize {
    if num_classes == 2 {
        1
    } else {
        num_classes
    }
}

/// Conditioning input for a score oracle: either a normalized map in
/// [-0.5, 0.5] or the unconditional sentinel (the constant -1 map).
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionMap {
    Conditional(Array3<f64>),
    Unconditional { h: usize, w: usize, k: usize },
}

impl ConditionMap {
    pub const SENTINEL: f64 = -1.0;

    /// Validated conditional map; every value must lie in [-0.5, 0.5].
    pub fn conditional(values: Array3<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|v| !(-0.5..=0.5).contains(*v)) {
            return Err(Error::InvalidCondition(format!(
                "conditional value {v} outside [-0.5, 0.5]"
            )));
        }
        Ok(ConditionMap::Conditional(values))
    }

    pub fn unconditional(h: usize, w: usize, k: usize) -> Self {
        ConditionMap::Unconditional { h, w, k }
    }

    pub fn is_unconditional(&self) -> bool {
        matches!(self, ConditionMap::Unconditional { .. })
    }

    /// (height, width, channels)
    pub fn dim(&self) -> (usize, usize, usize) {
        match self {
            ConditionMap::Conditional(v) => v.dim(),
            ConditionMap::Unconditional { h, w, k } => (*h, *w, *k),
        }
    }

    /// Materialize as an H×W×K array; the sentinel fills with -1.
    pub fn values(&self) -> Array3<f64> {
        match self {
            ConditionMap::Conditional(v) => v.clone(),
            ConditionMap::Unconditional { h, w, k } => {
                Array3::from_elem((*h, *w, *k), Self::SENTINEL)
            }
        }
    }
}
