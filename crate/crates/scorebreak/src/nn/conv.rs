//! 2D convolution via im2col and a dense matrix product.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Feat;

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// (out_channels, in_channels, k, k)
    pub w: Array4<f32>,
    pub b: Array1<f32>,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

fn out_len(n: usize, k: usize, stride: usize, pad: usize, dil: usize) -> usize {
    (n + 2 * pad - dil * (k - 1) - 1) / stride + 1
}

impl Conv2d {
    /// He-normal initialized convolution; `scale` shrinks the init (used to
    /// keep the output head near zero).
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        dilation: usize,
        rng: &mut R,
        scale: f32,
    ) -> Self {
        let fan_in = (in_ch * k * k) as f32;
        let std = (2.0 / fan_in).sqrt() * scale;
        let w = Array4::from_shape_simple_fn((out_ch, in_ch, k, k), || {
            rng.sample::<f32, _>(StandardNormal) * std
        });
        Self {
            w,
            b: Array1::zeros(out_ch),
            stride,
            pad,
            dilation,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.w.dim().2;
        (
            out_len(h, k, self.stride, self.pad, self.dilation),
            out_len(w, k, self.stride, self.pad, self.dilation),
        )
    }

    fn im2col(&self, x: &Feat) -> Array2<f32> {
        let (c, h, w) = x.dim();
        let k = self.w.dim().2;
        let (oh, ow) = self.out_hw(h, w);
        let mut cols = Array2::zeros((c * k * k, oh * ow));
        for ci in 0..c {
            for ky in 0..k {
                let base_y = (ky * self.dilation) as isize - self.pad as isize;
                for kx in 0..k {
                    let base_x = (kx * self.dilation) as isize - self.pad as isize;
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + base_y;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + base_x;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[(row, oy * ow + ox)] = x[(ci, iy as usize, ix as usize)];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, gcols: &Array2<f32>, dims: (usize, usize, usize)) -> Feat {
        let (c, h, w) = dims;
        let k = self.w.dim().2;
        let (oh, ow) = self.out_hw(h, w);
        let mut gx = Feat::zeros((c, h, w));
        for ci in 0..c {
            for ky in 0..k {
                let base_y = (ky * self.dilation) as isize - self.pad as isize;
                for kx in 0..k {
                    let base_x = (kx * self.dilation) as isize - self.pad as isize;
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + base_y;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride) as isize + base_x;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            gx[(ci, iy as usize, ix as usize)] += gcols[(row, oy * ow + ox)];
                        }
                    }
                }
            }
        }
        gx
    }

    fn w_mat(&self) -> Array2<f32> {
        let (o, i, k, _) = self.w.dim();
        self.w
            .view()
            .into_shape_with_order((o, i * k * k))
            .unwrap()
            .to_owned()
    }

    pub fn forward(&self, x: &Feat) -> Feat {
        self.forward_train(x).0
    }

    /// Forward pass that also returns the im2col matrix for backward.
    pub fn forward_train(&self, x: &Feat) -> (Feat, Array2<f32>) {
        let (_, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let cols = self.im2col(x);
        let y_mat = self.w_mat().dot(&cols);
        let o = self.w.dim().0;
        let mut y = y_mat.into_shape_with_order((o, oh, ow)).unwrap();
        for (c, mut plane) in y.outer_iter_mut().enumerate() {
            plane += self.b[c];
        }
        (y, cols)
    }

    /// Returns (grad wrt input, grad wrt weights, grad wrt bias).
    pub fn backward(
        &self,
        gy: &Feat,
        cols: &Array2<f32>,
        x_dims: (usize, usize, usize),
    ) -> (Feat, Array4<f32>, Array1<f32>) {
        let (o, i, k, _) = self.w.dim();
        let (_, oh, ow) = gy.dim();
        let gy_mat = gy
            .view()
            .into_shape_with_order((o, oh * ow))
            .unwrap()
            .to_owned();
        let gw = gy_mat
            .dot(&cols.t())
            .into_shape_with_order((o, i, k, k))
            .unwrap();
        let gb = gy_mat.sum_axis(ndarray::Axis(1));
        let gcols = self.w_mat().t().dot(&gy_mat);
        let gx = self.col2im(&gcols, x_dims);
        (gx, gw, gb)
    }
}
