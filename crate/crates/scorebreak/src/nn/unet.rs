//! Small U-shaped encoder-decoder with optional timestep embedding, plus a
//! plain dilated convolutional net. The U-net doubles as the score
//! estimator (with embedding) and as one of the toy victim segmenters
//! (without).

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

use super::{
    concat_channels, silu_grad, silu_map, split_channels, time_features, upsample2,
    upsample2_backward, Conv2d, Feat, Grads, Linear,
};
use crate::error::{Error, Result};

const CONV_NAMES: [&str; 9] = [
    "conv_in", "conv_e0", "conv_d1", "conv_e1", "conv_d2", "conv_mid", "conv_u1", "conv_u0",
    "conv_out",
];

/// Three-level U-net. Feature widths are `base` at full resolution and
/// `2*base` below; skip connections concatenate encoder features into the
/// decoder. Spatial dims must be divisible by 4.
#[derive(Debug, Clone)]
pub struct CondUnet {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base: usize,
    pub embed_dim: Option<usize>,
    conv_in: Conv2d,
    conv_e0: Conv2d,
    conv_d1: Conv2d,
    conv_e1: Conv2d,
    conv_d2: Conv2d,
    conv_mid: Conv2d,
    conv_u1: Conv2d,
    conv_u0: Conv2d,
    conv_out: Conv2d,
    temb: Vec<Linear>,
}

/// Intermediate activations retained for the backward pass.
pub struct UnetCache {
    e_feats: Option<Vec<f32>>,
    x_dim: (usize, usize, usize),
    cols: Vec<Array2<f32>>,
    pre: Vec<Feat>,
    h0: Feat,
    e0: Feat,
    h1: Feat,
    e1: Feat,
    h2: Feat,
    c1: Feat,
    c0: Feat,
    h4: Feat,
}

impl CondUnet {
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        base: usize,
        embed_dim: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let f = base;
        let conv_in = Conv2d::new(in_channels, f, 3, 1, 1, 1, rng, 1.0);
        let conv_e0 = Conv2d::new(f, f, 3, 1, 1, 1, rng, 1.0);
        let conv_d1 = Conv2d::new(f, 2 * f, 3, 2, 1, 1, rng, 1.0);
        let conv_e1 = Conv2d::new(2 * f, 2 * f, 3, 1, 1, 1, rng, 1.0);
        let conv_d2 = Conv2d::new(2 * f, 2 * f, 3, 2, 1, 1, rng, 1.0);
        let conv_mid = Conv2d::new(2 * f, 2 * f, 3, 1, 1, 1, rng, 1.0);
        let conv_u1 = Conv2d::new(4 * f, 2 * f, 3, 1, 1, 1, rng, 1.0);
        let conv_u0 = Conv2d::new(3 * f, f, 3, 1, 1, 1, rng, 1.0);
        let conv_out = Conv2d::new(f, out_channels, 3, 1, 1, 1, rng, 0.1);
        let temb = match embed_dim {
            Some(e) => {
                let widths = [f, 2 * f, 2 * f, 2 * f, f];
                widths.iter().map(|&w| Linear::new(e, w, rng, 1.0)).collect()
            }
            None => Vec::new(),
        };
        Self {
            in_channels,
            out_channels,
            base,
            embed_dim,
            conv_in,
            conv_e0,
            conv_d1,
            conv_e1,
            conv_d2,
            conv_mid,
            conv_u1,
            conv_u0,
            conv_out,
            temb,
        }
    }

    fn convs(&self) -> [&Conv2d; 9] {
        [
            &self.conv_in,
            &self.conv_e0,
            &self.conv_d1,
            &self.conv_e1,
            &self.conv_d2,
            &self.conv_mid,
            &self.conv_u1,
            &self.conv_u0,
            &self.conv_out,
        ]
    }

    fn add_channel_bias(a: &mut Feat, bias: &[f32]) {
        for (c, mut plane) in a.outer_iter_mut().enumerate() {
            plane += bias[c];
        }
    }

    pub fn forward(&self, x: &Feat, t: Option<usize>) -> Feat {
        self.forward_train(x, t).0
    }

    pub fn forward_train(&self, x: &Feat, t: Option<usize>) -> (Feat, UnetCache) {
        let (_, h, w) = x.dim();
        assert!(h % 4 == 0 && w % 4 == 0, "spatial dims must be divisible by 4");
        let e_feats = match (self.embed_dim, t) {
            (Some(dim), Some(t)) => Some(time_features(t, dim)),
            (None, _) => None,
            (Some(_), None) => panic!("timestep required for an embedded net"),
        };
        let bias = |idx: usize| -> Option<Vec<f32>> {
            e_feats.as_ref().map(|e| self.temb[idx].forward(e))
        };

        let mut cols = Vec::with_capacity(9);
        let mut pre = Vec::with_capacity(8);

        let (mut a0, c) = self.conv_in.forward_train(x);
        cols.push(c);
        if let Some(b) = bias(0) {
            Self::add_channel_bias(&mut a0, &b);
        }
        let h0 = silu_map(&a0);
        pre.push(a0);

        let (a1, c) = self.conv_e0.forward_train(&h0);
        cols.push(c);
        let e0 = silu_map(&a1);
        pre.push(a1);

        let (mut a2, c) = self.conv_d1.forward_train(&e0);
        cols.push(c);
        if let Some(b) = bias(1) {
            Self::add_channel_bias(&mut a2, &b);
        }
        let h1 = silu_map(&a2);
        pre.push(a2);

        let (a3, c) = self.conv_e1.forward_train(&h1);
        cols.push(c);
        let e1 = silu_map(&a3);
        pre.push(a3);

        let (mut a4, c) = self.conv_d2.forward_train(&e1);
        cols.push(c);
        if let Some(b) = bias(2) {
            Self::add_channel_bias(&mut a4, &b);
        }
        let h2 = silu_map(&a4);
        pre.push(a4);

        let (a5, c) = self.conv_mid.forward_train(&h2);
        cols.push(c);
        let m = silu_map(&a5);
        pre.push(a5);

        let u1 = upsample2(&m);
        let c1 = concat_channels(&u1, &e1);
        let (mut a6, c) = self.conv_u1.forward_train(&c1);
        cols.push(c);
        if let Some(b) = bias(3) {
            Self::add_channel_bias(&mut a6, &b);
        }
        let h3 = silu_map(&a6);
        pre.push(a6);

        let u0 = upsample2(&h3);
        let c0 = concat_channels(&u0, &e0);
        let (mut a7, c) = self.conv_u0.forward_train(&c0);
        cols.push(c);
        if let Some(b) = bias(4) {
            Self::add_channel_bias(&mut a7, &b);
        }
        let h4 = silu_map(&a7);
        pre.push(a7);

        let (y, c) = self.conv_out.forward_train(&h4);
        cols.push(c);

        let cache = UnetCache {
            e_feats,
            x_dim: x.dim(),
            cols,
            pre,
            h0,
            e0,
            h1,
            e1,
            h2,
            c1,
            c0,
            h4,
        };
        (y, cache)
    }

    /// Backward pass; returns parameter gradients (aligned with
    /// [`Self::param_layout`]) and the gradient with respect to the input.
    pub fn backward(&self, cache: &UnetCache, gy: &Feat) -> (Grads, Feat) {
        let f = self.base;
        let silu_bw = |g: &Feat, a: &Feat| -> Feat {
            let mut out = g.clone();
            out.zip_mut_with(a, |gv, &av| *gv *= silu_grad(av));
            out
        };
        // Channel-summed gradient, i.e. the gradient of a per-channel bias.
        let chan_sum = |g: &Feat| -> Vec<f32> {
            g.outer_iter().map(|plane| plane.sum()).collect()
        };

        let mut lin_grads: Vec<(Array2<f32>, ndarray::Array1<f32>)> = Vec::new();

        let (g_h4, gw_out, gb_out) = self.conv_out.backward(gy, &cache.cols[8], cache.h4.dim());
        let g_a7 = silu_bw(&g_h4, &cache.pre[7]);
        if let Some(e) = &cache.e_feats {
            let (gw, gb, _) = self.temb[4].backward(&chan_sum(&g_a7), e);
            lin_grads.push((gw, gb));
        }
        let (g_c0, gw_u0, gb_u0) = self.conv_u0.backward(&g_a7, &cache.cols[7], cache.c0.dim());
        let (g_u0, g_e0_skip) = split_channels(&g_c0, 2 * f);
        let g_h3 = upsample2_backward(&g_u0);

        let g_a6 = silu_bw(&g_h3, &cache.pre[6]);
        if let Some(e) = &cache.e_feats {
            let (gw, gb, _) = self.temb[3].backward(&chan_sum(&g_a6), e);
            lin_grads.push((gw, gb));
        }
        let (g_c1, gw_u1, gb_u1) = self.conv_u1.backward(&g_a6, &cache.cols[6], cache.c1.dim());
        let (g_u1, g_e1_skip) = split_channels(&g_c1, 2 * f);
        let g_m = upsample2_backward(&g_u1);

        let g_a5 = silu_bw(&g_m, &cache.pre[5]);
        let (g_h2, gw_mid, gb_mid) = self.conv_mid.backward(&g_a5, &cache.cols[5], cache.h2.dim());

        let g_a4 = silu_bw(&g_h2, &cache.pre[4]);
        if let Some(e) = &cache.e_feats {
            let (gw, gb, _) = self.temb[2].backward(&chan_sum(&g_a4), e);
            lin_grads.push((gw, gb));
        }
        let (g_e1_main, gw_d2, gb_d2) = self.conv_d2.backward(&g_a4, &cache.cols[4], cache.e1.dim());
        let mut g_e1 = g_e1_main;
        g_e1.zip_mut_with(&g_e1_skip, |a, &b| *a += b);

        let g_a3 = silu_bw(&g_e1, &cache.pre[3]);
        let (g_h1, gw_e1, gb_e1) = self.conv_e1.backward(&g_a3, &cache.cols[3], cache.h1.dim());

        let g_a2 = silu_bw(&g_h1, &cache.pre[2]);
        if let Some(e) = &cache.e_feats {
            let (gw, gb, _) = self.temb[1].backward(&chan_sum(&g_a2), e);
            lin_grads.push((gw, gb));
        }
        let (g_e0_main, gw_d1, gb_d1) = self.conv_d1.backward(&g_a2, &cache.cols[2], cache.e0.dim());
        let mut g_e0 = g_e0_main;
        g_e0.zip_mut_with(&g_e0_skip, |a, &b| *a += b);

        let g_a1 = silu_bw(&g_e0, &cache.pre[1]);
        let (g_h0, gw_e0, gb_e0) = self.conv_e0.backward(&g_a1, &cache.cols[1], cache.h0.dim());

        let g_a0 = silu_bw(&g_h0, &cache.pre[0]);
        if let Some(e) = &cache.e_feats {
            let (gw, gb, _) = self.temb[0].backward(&chan_sum(&g_a0), e);
            lin_grads.push((gw, gb));
        }
        let (g_x, gw_in, gb_in) = self.conv_in.backward(&g_a0, &cache.cols[0], cache.x_dim);

        // Canonical order: convs front to back, then the embedding linears.
        let conv_grads = [
            (gw_in, gb_in),
            (gw_e0, gb_e0),
            (gw_d1, gb_d1),
            (gw_e1, gb_e1),
            (gw_d2, gb_d2),
            (gw_mid, gb_mid),
            (gw_u1, gb_u1),
            (gw_u0, gb_u0),
            (gw_out, gb_out),
        ];
        let mut bufs = Vec::new();
        for (gw, gb) in conv_grads {
            bufs.push(gw.into_iter().collect());
            bufs.push(gb.into_iter().collect());
        }
        // lin_grads were pushed back-to-front (lin4 .. lin0).
        for (gw, gb) in lin_grads.into_iter().rev() {
            bufs.push(gw.into_iter().collect());
            bufs.push(gb.into_iter().collect());
        }
        (Grads(bufs), g_x)
    }

    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (name, conv) in CONV_NAMES.iter().zip(self.convs()) {
            let (o, i, k, _) = conv.w.dim();
            out.push((format!("{name}.w"), vec![o, i, k, k]));
            out.push((format!("{name}.b"), vec![o]));
        }
        for (idx, lin) in self.temb.iter().enumerate() {
            let (o, i) = lin.w.dim();
            out.push((format!("temb{idx}.w"), vec![o, i]));
            out.push((format!("temb{idx}.b"), vec![o]));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        let convs: [&mut Conv2d; 9] = [
            &mut self.conv_in,
            &mut self.conv_e0,
            &mut self.conv_d1,
            &mut self.conv_e1,
            &mut self.conv_d2,
            &mut self.conv_mid,
            &mut self.conv_u1,
            &mut self.conv_u0,
            &mut self.conv_out,
        ];
        for conv in convs {
            out.push(conv.w.as_slice_mut().unwrap());
            out.push(conv.b.as_slice_mut().unwrap());
        }
        for lin in &mut self.temb {
            out.push(lin.w.as_slice_mut().unwrap());
            out.push(lin.b.as_slice_mut().unwrap());
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for conv in self.convs() {
            out.push(conv.w.as_slice().unwrap());
            out.push(conv.b.as_slice().unwrap());
        }
        for lin in &self.temb {
            out.push(lin.w.as_slice().unwrap());
            out.push(lin.b.as_slice().unwrap());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        self.param_layout()
            .into_iter()
            .zip(self.param_slices())
            .map(|((name, shape), data)| (name, shape, data.to_vec()))
            .collect()
    }

    pub fn load_named(&mut self, tensors: &BTreeMap<String, (Vec<usize>, Vec<f32>)>) -> Result<()> {
        load_into(self.param_layout(), self.param_slices_mut(), tensors)
    }
}

/// Plain convolutional net with growing dilation; the second victim family.
#[derive(Debug, Clone)]
pub struct DilatedNet {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base: usize,
    convs: Vec<Conv2d>,
}

impl DilatedNet {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, base: usize, rng: &mut R) -> Self {
        let f = base;
        let convs = vec![
            Conv2d::new(in_channels, f, 3, 1, 1, 1, rng, 1.0),
            Conv2d::new(f, f, 3, 1, 2, 2, rng, 1.0),
            Conv2d::new(f, f, 3, 1, 4, 4, rng, 1.0),
            Conv2d::new(f, out_channels, 1, 1, 0, 1, rng, 0.1),
        ];
        Self {
            in_channels,
            out_channels,
            base,
            convs,
        }
    }

    pub fn forward(&self, x: &Feat) -> Feat {
        self.forward_train(x).0
    }

    #[allow(clippy::type_complexity)]
    pub fn forward_train(&self, x: &Feat) -> (Feat, (Vec<Array2<f32>>, Vec<Feat>, Vec<Feat>)) {
        let mut cols = Vec::new();
        let mut pre = Vec::new();
        let mut inputs = vec![x.clone()];
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let (a, c) = conv.forward_train(&h);
            cols.push(c);
            if i + 1 < self.convs.len() {
                h = silu_map(&a);
                pre.push(a);
                inputs.push(h.clone());
            } else {
                h = a;
            }
        }
        (h, (cols, pre, inputs))
    }

    pub fn backward(
        &self,
        cache: &(Vec<Array2<f32>>, Vec<Feat>, Vec<Feat>),
        gy: &Feat,
    ) -> (Grads, Feat) {
        let (cols, pre, inputs) = cache;
        let mut grads_rev = Vec::new();
        let mut g = gy.clone();
        for i in (0..self.convs.len()).rev() {
            let (gx, gw, gb) = self.convs[i].backward(&g, &cols[i], inputs[i].dim());
            grads_rev.push((gw, gb));
            g = gx;
            if i > 0 {
                g.zip_mut_with(&pre[i - 1], |gv, &av| *gv *= silu_grad(av));
            }
        }
        let mut bufs = Vec::new();
        for (gw, gb) in grads_rev.into_iter().rev() {
            bufs.push(gw.into_iter().collect());
            bufs.push(gb.into_iter().collect());
        }
        (Grads(bufs), g)
    }

    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        self.convs
            .iter()
            .enumerate()
            .flat_map(|(i, conv)| {
                let (o, ic, k, _) = conv.w.dim();
                vec![
                    (format!("conv{i}.w"), vec![o, ic, k, k]),
                    (format!("conv{i}.b"), vec![o]),
                ]
            })
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        self.convs
            .iter_mut()
            .flat_map(|conv| {
                let Conv2d { w, b, .. } = conv;
                vec![w.as_slice_mut().unwrap(), b.as_slice_mut().unwrap()]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f32]> {
        self.convs
            .iter()
            .flat_map(|conv| vec![conv.w.as_slice().unwrap(), conv.b.as_slice().unwrap()])
            .collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        self.param_layout()
            .into_iter()
            .zip(self.param_slices())
            .map(|((name, shape), data)| (name, shape, data.to_vec()))
            .collect()
    }

    pub fn load_named(&mut self, tensors: &BTreeMap<String, (Vec<usize>, Vec<f32>)>) -> Result<()> {
        load_into(self.param_layout(), self.param_slices_mut(), tensors)
    }
}

fn load_into(
    layout: Vec<(String, Vec<usize>)>,
    slices: Vec<&mut [f32]>,
    tensors: &BTreeMap<String, (Vec<usize>, Vec<f32>)>,
) -> Result<()> {
    for ((name, shape), slice) in layout.into_iter().zip(slices) {
        let (got_shape, data) = tensors
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        if *got_shape != shape || data.len() != slice.len() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {got_shape:?}, expected {shape:?}"
            )));
        }
        slice.copy_from_slice(data);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_feat(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Feat {
        Feat::from_shape_simple_fn((c, h, w), || rng.random_range(-1.0f32..1.0))
    }

    fn loss(y: &Feat) -> f64 {
        y.iter().map(|&v| 0.5 * (v as f64) * (v as f64)).sum()
    }

    /// Full-network gradient check against central differences, run on a
    /// random subset of parameters for speed.
    #[test]
    fn unet_param_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = CondUnet::new(2, 1, 3, Some(8), &mut rng);
        let x = rand_feat(&mut rng, 2, 8, 8);
        let t = 17;
        let (y, cache) = net.forward_train(&x, Some(t));
        let (grads, _gx) = net.backward(&cache, &y);

        let layout = net.param_layout();
        assert_eq!(layout.len(), grads.0.len());
        let mut probe_rng = ChaCha8Rng::seed_from_u64(5);
        for (pi, _) in layout.iter().enumerate() {
            let len = grads.0[pi].len();
            for _ in 0..3.min(len) {
                let ei = probe_rng.random_range(0..len);
                let step = 1e-2f32;
                let (up, down) = {
                    let mut eval = |delta: f32| {
                        net.param_slices_mut()[pi][ei] += delta;
                        let v = loss(&net.forward(&x, Some(t)));
                        net.param_slices_mut()[pi][ei] -= delta;
                        v
                    };
                    (eval(step), eval(-step))
                };
                let fd = (up - down) / (2.0 * step as f64);
                let got = grads.0[pi][ei] as f64;
                let denom = fd.abs().max(got.abs()).max(5e-3);
                assert!(
                    (fd - got).abs() / denom < 5e-2,
                    "param {pi} elem {ei}: fd {fd} vs analytic {got}"
                );
            }
        }
    }

    #[test]
    fn unet_input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = CondUnet::new(1, 1, 3, None, &mut rng);
        let x = rand_feat(&mut rng, 1, 8, 8);
        let (y, cache) = net.forward_train(&x, None);
        let (_, gx) = net.backward(&cache, &y);
        let mut probe_rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let i = probe_rng.random_range(0..8);
            let j = probe_rng.random_range(0..8);
            let step = 1e-2f32;
            let mut xp = x.clone();
            xp[(0, i, j)] += step;
            let mut xm = x.clone();
            xm[(0, i, j)] -= step;
            let fd = (loss(&net.forward(&xp, None)) - loss(&net.forward(&xm, None)))
                / (2.0 * step as f64);
            let got = gx[(0, i, j)] as f64;
            let denom = fd.abs().max(got.abs()).max(5e-3);
            assert!((fd - got).abs() / denom < 5e-2, "fd {fd} vs {got}");
        }
    }

    #[test]
    fn dilated_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut net = DilatedNet::new(2, 1, 4, &mut rng);
        let x = rand_feat(&mut rng, 2, 8, 8);
        let (y, cache) = net.forward_train(&x);
        let (grads, gx) = net.backward(&cache, &y);
        let mut probe_rng = ChaCha8Rng::seed_from_u64(1);
        for pi in 0..grads.0.len() {
            let len = grads.0[pi].len();
            for _ in 0..3.min(len) {
                let ei = probe_rng.random_range(0..len);
                let step = 1e-2f32;
                let mut eval = |delta: f32| {
                    net.param_slices_mut()[pi][ei] += delta;
                    let v = loss(&net.forward(&x));
                    net.param_slices_mut()[pi][ei] -= delta;
                    v
                };
                let fd = (eval(step) - eval(-step)) / (2.0 * step as f64);
                let got = grads.0[pi][ei] as f64;
                let denom = fd.abs().max(got.abs()).max(5e-3);
                assert!((fd - got).abs() / denom < 5e-2, "param {pi}: {fd} vs {got}");
            }
        }
        // Input gradient spot check.
        let step = 1e-2f32;
        let mut xp = x.clone();
        xp[(1, 3, 4)] += step;
        let mut xm = x.clone();
        xm[(1, 3, 4)] -= step;
        let fd = (loss(&net.forward(&xp)) - loss(&net.forward(&xm))) / (2.0 * step as f64);
        let got = gx[(1, 3, 4)] as f64;
        assert!((fd - got).abs() / fd.abs().max(got.abs()).max(5e-3) < 5e-2);
    }

    #[test]
    fn unet_forward_is_deterministic_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = CondUnet::new(4, 3, 8, Some(16), &mut rng);
        let x = rand_feat(&mut rng, 4, 16, 16);
        let y1 = net.forward(&x, Some(500));
        let y2 = net.forward(&x, Some(500));
        assert_eq!(y1, y2);
        assert!(y1.iter().all(|v| v.is_finite()));
        assert_eq!(y1.dim(), (3, 16, 16));
    }

    #[test]
    fn state_dict_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = CondUnet::new(2, 1, 4, Some(8), &mut rng);
        let mut clone = CondUnet::new(2, 1, 4, Some(8), &mut rng);
        let map: BTreeMap<_, _> = net
            .named_tensors()
            .into_iter()
            .map(|(n, s, d)| (n, (s, d)))
            .collect();
        clone.load_named(&map).unwrap();
        let x = rand_feat(&mut rng, 2, 8, 8);
        assert_eq!(net.forward(&x, Some(3)), clone.forward(&x, Some(3)));
    }

    #[test]
    fn unet_stays_under_two_million_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = CondUnet::new(4, 3, 16, Some(32), &mut rng);
        assert!(net.param_count() <= 2_000_000, "{}", net.param_count());
    }
}
