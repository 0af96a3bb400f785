//! Minimal neural-network stack used by the score estimator and the toy
//! victim segmenters.
//!
//! Single-sample feature maps are `(channels, height, width)` arrays of
//! `f32`; batching happens in the training loops, which process items
//! independently and sum per-item gradients in a fixed order so training is
//! bitwise reproducible. Layer backward passes are checked against finite
//! differences in the tests below.

mod conv;
mod linear;
mod unet;

pub use conv::Conv2d;
pub use linear::Linear;
pub use unet::{CondUnet, DilatedNet, UnetCache};

use ndarray::Array3;

/// One feature map: channels × height × width.
pub type Feat = Array3<f32>;

/// Parameter gradients, flat buffers aligned with a network's parameter
/// order.
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Vec<f32>>);

impl Grads {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        Grads(shapes.iter().map(|&n| vec![0.0; n]).collect())
    }

    pub fn add_assign(&mut self, other: &Grads) {
        assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f32) {
        for buf in &mut self.0 {
            for v in buf.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Adaptive moment estimation over flat parameter slices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut [f32]>, grads: &Grads) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(params.len(), grads.0.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.0)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Sinusoidal timestep features of even dimension `dim`.
pub fn time_features(t: usize, dim: usize) -> Vec<f32> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding dim must be even");
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / (half.max(2) - 1) as f64).exp();
        let angle = t as f64 * freq;
        out[i] = angle.sin() as f32;
        out[half + i] = angle.cos() as f32;
    }
    out
}

pub(crate) fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

pub(crate) fn silu_grad(x: f32) -> f32 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub(crate) fn silu_map(x: &Feat) -> Feat {
    x.mapv(silu)
}

/// Nearest-neighbour 2x upsampling.
pub(crate) fn upsample2(x: &Feat) -> Feat {
    let (c, h, w) = x.dim();
    Feat::from_shape_fn((c, 2 * h, 2 * w), |(ci, i, j)| x[(ci, i / 2, j / 2)])
}

/// Gradient of [`upsample2`]: sum each 2x2 block.
pub(crate) fn upsample2_backward(gy: &Feat) -> Feat {
    let (c, h2, w2) = gy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut gx = Feat::zeros((c, h, w));
    for ci in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                gx[(ci, i / 2, j / 2)] += gy[(ci, i, j)];
            }
        }
    }
    gx
}

pub(crate) fn concat_channels(a: &Feat, b: &Feat) -> Feat {
    let (ca, h, w) = a.dim();
    let (cb, hb, wb) = b.dim();
    assert_eq!((h, w), (hb, wb));
    let mut out = Feat::zeros((ca + cb, h, w));
    out.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    out.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    out
}

pub(crate) fn split_channels(g: &Feat, ca: usize) -> (Feat, Feat) {
    (
        g.slice(ndarray::s![..ca, .., ..]).to_owned(),
        g.slice(ndarray::s![ca.., .., ..]).to_owned(),
    )
}
