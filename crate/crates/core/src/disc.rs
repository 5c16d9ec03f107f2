//! Fully convolutional relativistic-average least-squares discriminator with
//! hand-written forward and backward passes.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{read_bytes, write_bytes};

pub const KERNEL: usize = 4;
pub const LEAK: f64 = 0.2;
pub const INPUT_CHANNELS: usize = 3;

/// `(filters, stride)` of the default 14-layer network.
pub const DEFAULT_LAYERS: [(usize, usize); 14] = [
    (8, 1),
    (16, 2),
    (16, 1),
    (24, 2),
    (24, 1),
    (32, 2),
    (32, 1),
    (32, 1),
    (64, 2),
    (64, 1),
    (64, 1),
    (16, 1),
    (4, 1),
    (1, 1),
];

/// Channel-major activation map.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    /// Network input from an image; single-channel images are broadcast.
    pub fn from_image(img: &Image, channels: usize) -> Result<Self> {
        let src = img.channels();
        if src != 1 && src != channels {
            return Err(Error::ShapeMismatch(format!(
                "{src}-channel image for a {channels}-channel discriminator"
            )));
        }
        let (w, h) = (img.width(), img.height());
        let mut t = Tensor::zeros(channels, h, w);
        for c in 0..channels {
            for y in 0..h {
                for x in 0..w {
                    t.data[(c * h + y) * w + x] = img.get(x, y, c.min(src - 1));
                }
            }
        }
        Ok(t)
    }

    /// Gradient on an input built by [`Tensor::from_image`], folded back onto
    /// `channels` image channels.
    pub fn to_image_grad(&self, channels: usize) -> Image {
        let mut img = Image::new(self.w, self.h, channels);
        for c in 0..self.c {
            for y in 0..self.h {
                for x in 0..self.w {
                    let tc = if channels == 1 { 0 } else { c };
                    let v = img.get(x, y, tc) + self.data[(c * self.h + y) * self.w + x];
                    img.set(x, y, tc, v);
                }
            }
        }
        img
    }
}

/// Mirror index without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Output size and leading pad of a SAME-padded convolution.
fn same_geometry(n: usize, stride: usize) -> (usize, usize) {
    let out = n.div_ceil(stride);
    let total = ((out - 1) * stride + KERNEL).saturating_sub(n);
    (out, total / 2)
}

/// Source index for every (output position, kernel tap) along one axis.
fn tap_table(n: usize, stride: usize) -> (usize, Vec<usize>) {
    let (out, pad) = same_geometry(n, stride);
    let mut table = Vec::with_capacity(out * KERNEL);
    for o in 0..out {
        for k in 0..KERNEL {
            table.push(reflect((o * stride + k) as isize - pad as isize, n));
        }
    }
    (out, table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    /// Indexed `[out][in][ky][kx]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Patch matrix with one row of `in_ch * 16` taps per output pixel.
    fn im2col(&self, x: &Tensor) -> (usize, usize, Vec<usize>, Vec<usize>, Vec<f64>) {
        let (oh, rows) = tap_table(x.h, self.stride);
        let (ow, cols) = tap_table(x.w, self.stride);
        let k = self.in_ch * KERNEL * KERNEL;
        let mut patches = vec![0.0; oh * ow * k];
        patches.par_chunks_mut(k).enumerate().for_each(|(p, dst)| {
            let (oy, ox) = (p / ow, p % ow);
            for i in 0..self.in_ch {
                let src = &x.data[i * x.h * x.w..(i + 1) * x.h * x.w];
                for ky in 0..KERNEL {
                    let row = rows[oy * KERNEL + ky] * x.w;
                    for kx in 0..KERNEL {
                        dst[(i * KERNEL + ky) * KERNEL + kx] = src[row + cols[ox * KERNEL + kx]];
                    }
                }
            }
        });
        (oh, ow, rows, cols, patches)
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let (oh, ow, _, _, patches) = self.im2col(x);
        let pix = oh * ow;
        let k = self.in_ch * KERNEL * KERNEL;
        let mut out = vec![0.0; self.out_ch * pix];
        // out[o][p] = Σ_j W[o][j] P[p][j]
        // SAFETY: all three buffers hold exactly the extents passed with their strides.
        unsafe {
            matrixmultiply::dgemm(
                self.out_ch,
                k,
                pix,
                1.0,
                self.weights.as_ptr(),
                k as isize,
                1,
                patches.as_ptr(),
                1,
                k as isize,
                0.0,
                out.as_mut_ptr(),
                pix as isize,
                1,
            );
        }
        for (o, plane) in out.chunks_mut(pix).enumerate() {
            plane.iter_mut().for_each(|v| *v += self.bias[o]);
        }
        Tensor {
            c: self.out_ch,
            h: oh,
            w: ow,
            data: out,
        }
    }

    /// Returns `(grad_weights, grad_bias, grad_input)` for the gradient on the
    /// pre-activation output.
    fn backward(&self, x: &Tensor, grad: &Tensor) -> (Vec<f64>, Vec<f64>, Tensor) {
        let (oh, ow, rows, cols, patches) = self.im2col(x);
        let pix = oh * ow;
        let k = self.in_ch * KERNEL * KERNEL;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gp = vec![0.0; pix * k];
        // SAFETY: all buffers hold exactly the extents passed with their strides.
        unsafe {
            // gW[o][j] = Σ_p G[o][p] P[p][j]
            matrixmultiply::dgemm(
                self.out_ch,
                pix,
                k,
                1.0,
                grad.data.as_ptr(),
                pix as isize,
                1,
                patches.as_ptr(),
                k as isize,
                1,
                0.0,
                gw.as_mut_ptr(),
                k as isize,
                1,
            );
            // gP[p][j] = Σ_o G[o][p] W[o][j]
            matrixmultiply::dgemm(
                pix,
                self.out_ch,
                k,
                1.0,
                grad.data.as_ptr(),
                1,
                pix as isize,
                self.weights.as_ptr(),
                k as isize,
                1,
                0.0,
                gp.as_mut_ptr(),
                k as isize,
                1,
            );
        }
        let gb: Vec<f64> = (0..self.out_ch)
            .map(|o| grad.data[o * pix..(o + 1) * pix].iter().sum())
            .collect();
        let in_plane = x.h * x.w;
        let mut gx = vec![0.0; self.in_ch * in_plane];
        gx.par_chunks_mut(in_plane).enumerate().for_each(|(i, dst)| {
            for p in 0..pix {
                let (oy, ox) = (p / ow, p % ow);
                let src = &gp[p * k + i * KERNEL * KERNEL..p * k + (i + 1) * KERNEL * KERNEL];
                for ky in 0..KERNEL {
                    let row = rows[oy * KERNEL + ky] * x.w;
                    for kx in 0..KERNEL {
                        dst[row + cols[ox * KERNEL + kx]] += src[ky * KERNEL + kx];
                    }
                }
            }
        });
        (
            gw,
            gb,
            Tensor {
                c: self.in_ch,
                h: x.h,
                w: x.w,
                data: gx,
            },
        )
    }
}

#[inline]
fn lrelu(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAK * v
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorNet {
    pub layers: Vec<ConvLayer>,
}

impl DiscriminatorNet {
    /// Uniform Kaiming initialization for leaky-ReLU layers, zero biases.
    pub fn new(specs: &[(usize, usize)], in_ch: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(specs, in_ch)?;
        for layer in &mut net.layers {
            let fan_in = (layer.in_ch * KERNEL * KERNEL) as f64;
            let bound = (6.0 / ((1.0 + LEAK * LEAK) * fan_in)).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(specs: &[(usize, usize)], in_ch: usize) -> Result<Self> {
        if specs.is_empty() || specs.last().map(|s| s.0) != Some(1) {
            return Err(Error::InvalidInput("discriminator must end in a single-channel layer".into()));
        }
        if specs.iter().any(|&(f, s)| f == 0 || !(s == 1 || s == 2)) {
            return Err(Error::InvalidInput("layer filters must be positive and strides 1 or 2".into()));
        }
        let mut c = in_ch;
        let layers = specs
            .iter()
            .map(|&(out_ch, stride)| {
                let layer = ConvLayer {
                    in_ch: c,
                    out_ch,
                    stride,
                    weights: vec![0.0; out_ch * c * KERNEL * KERNEL],
                    bias: vec![0.0; out_ch],
                };
                c = out_ch;
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_ch
    }

    /// Smallest accepted input side: the stride chain must leave at least two
    /// samples per axis.
    pub fn min_input_size(&self) -> usize {
        2 << self.layers.iter().filter(|l| l.stride == 2).count()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Weights then biases of every layer, in layer order.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter vector length");
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "{}-channel input for a {}-channel discriminator",
                x.c,
                self.in_channels()
            )));
        }
        let min = self.min_input_size();
        if x.w < min || x.h < min {
            return Err(Error::InvalidInput(format!(
                "discriminator input {}x{} smaller than {min}x{min}",
                x.w, x.h
            )));
        }
        Ok(())
    }

    /// Mean of the final score map.
    pub fn forward(&self, x: &Tensor) -> Result<f64> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(f64, ForwardCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let z = layer.forward(&cur);
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = lrelu(*v));
            inputs.push(cur);
            pre.push(z);
            cur = a;
        }
        let score = cur.data.iter().sum::<f64>() / cur.data.len() as f64;
        Ok((score, ForwardCache { inputs, pre }))
    }

    /// Gradients of `grad_score * score` with respect to the flat parameters
    /// and to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_score: f64) -> (Vec<f64>, Tensor) {
        let last = cache.pre.last().expect("non-empty network");
        let n = last.data.len() as f64;
        let mut g = Tensor {
            c: last.c,
            h: last.h,
            w: last.w,
            data: vec![grad_score / n; last.data.len()],
        };
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate().rev() {
            for (gv, z) in g.data.iter_mut().zip(&cache.pre[li].data) {
                if *z < 0.0 {
                    *gv *= LEAK;
                }
            }
            let (gw, gb, gx) = layer.backward(&cache.inputs[li], &g);
            grads.push((gw, gb));
            g = gx;
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads.into_iter().rev() {
            flat.extend(gw);
            flat.extend(gb);
        }
        (flat, g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GTDN");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            for v in [l.in_ch, l.out_ch, l.stride, KERNEL] {
                bytes.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        for v in self.params() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_bytes(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let bad = |reason: &str| Error::format(path, reason);
        let u32_at = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad("truncated header"))
        };
        if bytes.get(0..4) != Some(b"GTDN") || u32_at(4)? != 1 {
            return Err(bad("not a version-1 discriminator checkpoint"));
        }
        let count = u32_at(8)? as usize;
        let mut specs = Vec::with_capacity(count);
        let mut in_ch = 0;
        for n in 0..count {
            let base = 12 + 16 * n;
            let (i, o, s, k) = (u32_at(base)?, u32_at(base + 4)?, u32_at(base + 8)?, u32_at(base + 12)?);
            if k as usize != KERNEL {
                return Err(bad("unsupported kernel size"));
            }
            if n == 0 {
                in_ch = i as usize;
            }
            specs.push((o as usize, s as usize));
        }
        let mut net = Self::zeros(&specs, in_ch)?;
        let start = 12 + 16 * count;
        let body = &bytes[start.min(bytes.len())..];
        if body.len() != 8 * net.param_count() {
            return Err(bad("parameter block has the wrong length"));
        }
        let p: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        net.set_params(&p);
        Ok(net)
    }
}

/// `E_r[(D_r - E_f[D_f] - l)²] + E_f[(D_f - E_r[D_r] + l)²]` and its
/// gradient with respect to every score.
pub fn ralsgan(real: &[f64], fake: &[f64], l: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidInput("relativistic loss needs real and fake scores".into()));
    }
    let (nr, nf) = (real.len() as f64, fake.len() as f64);
    let mr = real.iter().sum::<f64>() / nr;
    let mf = fake.iter().sum::<f64>() / nf;
    let a: Vec<f64> = real.iter().map(|d| d - mf - l).collect();
    let b: Vec<f64> = fake.iter().map(|d| d - mr + l).collect();
    let ma = a.iter().sum::<f64>() / nr;
    let mb = b.iter().sum::<f64>() / nf;
    let loss = a.iter().map(|v| v * v).sum::<f64>() / nr + b.iter().map(|v| v * v).sum::<f64>() / nf;
    let gr = a.iter().map(|v| 2.0 * (v - mb) / nr).collect();
    let gf = b.iter().map(|v| 2.0 * (v - ma) / nf).collect();
    Ok((loss, gr, gf))
}

pub fn ralsgan_loss(real: &[f64], fake: &[f64], l: f64) -> Result<f64> {
    Ok(ralsgan(real, fake, l)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    pub crop: (f64, f64),
    pub scale: (f64, f64),
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    pub intensity: (f64, f64),
    pub gamma: (f64, f64),
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            crop: (0.8, 1.0),
            scale: (0.85, 1.15),
            rotation_deg: 10.0,
            intensity: (0.9, 1.1),
            gamma: (0.9, 1.1),
        }
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

impl AugmentParams {
    pub fn none() -> Self {
        Self {
            crop: (1.0, 1.0),
            scale: (1.0, 1.0),
            rotation_deg: 0.0,
            intensity: (1.0, 1.0),
            gamma: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if !(ok(self.crop) && self.crop.1 <= 1.0 && ok(self.scale) && ok(self.intensity) && ok(self.gamma))
            || !self.rotation_deg.is_finite()
        {
            return Err(Error::InvalidInput("augmentation ranges must be finite, positive and ordered".into()));
        }
        Ok(())
    }

    /// Random crop, scale and rotation resampled to the input size, followed
    /// by intensity and gamma scaling.
    pub fn apply(&self, img: &Image, rng: &mut impl Rng) -> Image {
        let (w, h) = (img.width() as f64, img.height() as f64);
        let crop = draw(rng, self.crop);
        let scale = draw(rng, self.scale);
        let angle = if self.rotation_deg > 0.0 {
            rng.gen_range(-self.rotation_deg..self.rotation_deg).to_radians()
        } else {
            0.0
        };
        let intensity = draw(rng, self.intensity);
        let gamma = draw(rng, self.gamma);
        let cx = 0.5 * w + rng.gen_range(-0.5..0.5) * (1.0 - crop) * w;
        let cy = 0.5 * h + rng.gen_range(-0.5..0.5) * (1.0 - crop) * h;
        let k = crop / scale;
        let (s, c) = angle.sin_cos();
        let mut out = Image::new(img.width(), img.height(), img.channels());
        for y in 0..img.height() {
            for x in 0..img.width() {
                let dx = (x as f64 + 0.5 - 0.5 * w) * k;
                let dy = (y as f64 + 0.5 - 0.5 * h) * k;
                let sx = cx + c * dx - s * dy;
                let sy = cy + s * dx + c * dy;
                for ch in 0..img.channels() {
                    let v = img.sample_clamped(sx, sy, ch).max(0.0);
                    out.set(x, y, ch, intensity * v.powf(gamma));
                }
            }
        }
        out
    }
}

/// FIFO store of earlier fake images.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    items: VecDeque<Image>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, img: Image) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(img);
    }

    /// Up to `n` distinct stored images.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Image> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| self.items[i].clone()).collect()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscConfig {
    pub layers: Vec<(usize, usize)>,
    pub learning_rate: f64,
    pub l2_weight: f64,
    pub real_batch: usize,
    pub fake_batch: usize,
    pub history_batch: usize,
    pub history_capacity: usize,
    pub augment: AugmentParams,
}

impl Default for DiscConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS.to_vec(),
            learning_rate: 2e-4,
            l2_weight: 2e-3,
            real_batch: 8,
            fake_batch: 4,
            history_batch: 4,
            history_capacity: 64,
            augment: AugmentParams::default(),
        }
    }
}

/// Scores a batch; returns the scores and caches.
fn score_batch(net: &DiscriminatorNet, images: &[Image]) -> Result<Vec<(f64, ForwardCache)>> {
    images
        .iter()
        .map(|img| net.forward_cached(&Tensor::from_image(img, net.in_channels())?))
        .collect()
}

pub fn score_images(net: &DiscriminatorNet, images: &[Image]) -> Result<Vec<f64>> {
    images
        .iter()
        .map(|img| net.forward(&Tensor::from_image(img, net.in_channels())?))
        .collect()
}

/// Discriminator objective `ralsgan(l = 1) + l2 |Θ|²` and its parameter
/// gradient on already-augmented batches.
pub fn disc_loss_and_grad(net: &DiscriminatorNet, reals: &[Image], fakes: &[Image], l2: f64) -> Result<(f64, Vec<f64>)> {
    let real = score_batch(net, reals)?;
    let fake = score_batch(net, fakes)?;
    let rs: Vec<f64> = real.iter().map(|r| r.0).collect();
    let fs: Vec<f64> = fake.iter().map(|f| f.0).collect();
    let (loss, gr, gf) = ralsgan(&rs, &fs, 1.0)?;
    let params = net.params();
    let mut grad: Vec<f64> = params.iter().map(|p| 2.0 * l2 * p).collect();
    for ((_, cache), g) in real.iter().zip(&gr).chain(fake.iter().zip(&gf)) {
        let (gp, _) = net.backward(cache, *g);
        for (a, b) in grad.iter_mut().zip(gp) {
            *a += b;
        }
    }
    let reg = l2 * params.iter().map(|p| p * p).sum::<f64>();
    Ok((loss + reg, grad))
}

/// One discriminator update: history samples are drawn before the current
/// fakes are pushed, every input is augmented, and Adam takes one step.
#[allow(clippy::too_many_arguments)]
pub fn disc_train_step(
    net: &mut DiscriminatorNet,
    adam: &mut Adam,
    reals: &[Image],
    fakes: &[Image],
    history: &mut HistoryBuffer,
    history_batch: usize,
    l2: f64,
    augment: &AugmentParams,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut all_fakes: Vec<Image> = fakes.to_vec();
    all_fakes.extend(history.sample(history_batch, rng));
    let reals_aug: Vec<Image> = reals.iter().map(|i| augment.apply(i, rng)).collect();
    let fakes_aug: Vec<Image> = all_fakes.iter().map(|i| augment.apply(i, rng)).collect();
    let (loss, grad) = disc_loss_and_grad(net, &reals_aug, &fakes_aug, l2)?;
    let mut params = net.params();
    adam.step(&mut params, &grad);
    net.set_params(&params);
    for f in fakes {
        history.push(f.clone());
    }
    Ok(loss)
}

/// Generator-side loss `ralsgan(l = -1)` and its gradient on each fake image.
pub fn disc_density_grad(net: &DiscriminatorNet, reals: &[Image], fakes: &[Image]) -> Result<(f64, Vec<Image>)> {
    let rs = score_images(net, reals)?;
    let fake = score_batch(net, fakes)?;
    let fs: Vec<f64> = fake.iter().map(|f| f.0).collect();
    let (loss, _, gf) = ralsgan(&rs, &fs, -1.0)?;
    let grads = fake
        .iter()
        .zip(&gf)
        .zip(fakes)
        .map(|(((_, cache), g), img)| net.backward(cache, *g).1.to_image_grad(img.channels()))
        .collect();
    Ok((loss, grads))
}

/// Network, optimizer state and fake history bundled for the reconstruction.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub net: DiscriminatorNet,
    pub adam: Adam,
    pub history: HistoryBuffer,
    pub config: DiscConfig,
}

impl Discriminator {
    pub fn new(config: DiscConfig, rng: &mut impl Rng) -> Result<Self> {
        config.augment.validate()?;
        let net = DiscriminatorNet::new(&config.layers, INPUT_CHANNELS, rng)?;
        Ok(Self {
            adam: Adam::new(net.param_count(), config.learning_rate),
            history: HistoryBuffer::new(config.history_capacity),
            net,
            config,
        })
    }

    pub fn train_step(&mut self, reals: &[Image], fakes: &[Image], rng: &mut impl Rng) -> Result<f64> {
        disc_train_step(
            &mut self.net,
            &mut self.adam,
            reals,
            fakes,
            &mut self.history,
            self.config.history_batch,
            self.config.l2_weight,
            &self.config.augment,
            rng,
        )
    }

    pub fn density_grad(&self, reals: &[Image], fakes: &[Image]) -> Result<(f64, Vec<Image>)> {
        disc_density_grad(&self.net, reals, fakes)
    }
}
