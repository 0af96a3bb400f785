//! Dense layer used for timestep-embedding projections.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct Linear {
    /// (out, in)
    pub w: Array2<f32>,
    pub b: Array1<f32>,
}

impl Linear {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R, scale: f32) -> Self {
        let std = (2.0 / in_dim as f32).sqrt() * scale;
        Self {
            w: Array2::from_shape_simple_fn((out_dim, in_dim), || {
                rng.sample::<f32, _>(StandardNormal) * std
            }),
            b: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut out = self.b.to_vec();
        for (o, row) in self.w.outer_iter().enumerate() {
            out[o] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>();
        }
        out
    }

    /// Returns (grad wrt weights, grad wrt bias, grad wrt input).
    pub fn backward(&self, gy: &[f32], x: &[f32]) -> (Array2<f32>, Array1<f32>, Vec<f32>) {
        let (o, i) = self.w.dim();
        let mut gw = Array2::zeros((o, i));
        for oi in 0..o {
            for ii in 0..i {
                gw[(oi, ii)] = gy[oi] * x[ii];
            }
        }
        let gb = Array1::from_vec(gy.to_vec());
        let mut gx = vec![0.0; i];
        for oi in 0..o {
            for ii in 0..i {
                gx[ii] += self.w[(oi, ii)] * gy[oi];
            }
        }
        (gw, gb, gx)
    }
}
