//! Linear-radiance images, row-major from the top row, channel fastest.

use crate::error::{ensure_same, Result};
use crate::grid::{blur_axis, gaussian_kernel};
use crate::math::lerp;

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, v: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![v; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        ensure_same(data.len(), width * height * channels, "image data length")?;
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `x + 0.5`); `None` outside the image.
    pub fn sample_bilinear(&self, px: f64, py: f64, c: usize) -> Option<f64> {
        if px < 0.0 || py < 0.0 || px > self.width as f64 || py > self.height as f64 {
            return None;
        }
        Some(self.sample_clamped(px, py, c))
    }

    /// Bilinear sample with coordinates clamped to the border pixels.
    pub fn sample_clamped(&self, px: f64, py: f64, c: usize) -> f64 {
        let fx = (px - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (py - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = lerp(self.get(x0, y0, c), self.get(x1, y0, c), tx);
        let bot = lerp(self.get(x0, y1, c), self.get(x1, y1, c), tx);
        lerp(top, bot, ty)
    }

    /// Per-pixel maximum over channels.
    pub fn max_channel(&self) -> Image {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Broadcasts a single-channel image to `channels`.
    pub fn broadcast(&self, channels: usize) -> Image {
        if self.channels == channels {
            return self.clone();
        }
        assert_eq!(self.channels, 1, "only single-channel images broadcast");
        let data = self.data.iter().flat_map(|&v| std::iter::repeat(v).take(channels)).collect();
        Image {
            width: self.width,
            height: self.height,
            channels,
            data,
        }
    }

    /// Sums channels back onto one; the adjoint of [`Image::broadcast`].
    pub fn sum_channels(&self) -> Image {
        let data = self.data.chunks_exact(self.channels).map(|px| px.iter().sum()).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn gaussian_blur(&self, sigma: f64) -> Image {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let mut out = self.clone();
        for c in 0..self.channels {
            let mut plane: Vec<f64> = (0..self.width * self.height)
                .map(|i| self.data[i * self.channels + c])
                .collect();
            let shape = [self.width, self.height, 1];
            plane = blur_axis(&plane, shape, 0, &kernel);
            plane = blur_axis(&plane, shape, 1, &kernel);
            for (i, v) in plane.into_iter().enumerate() {
                out.data[i * self.channels + c] = v;
            }
        }
        out
    }

    /// Area-averaging (downscale) or bilinear (upscale) resize.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mx = sx.ceil().max(1.0) as usize;
        let my = sy.ceil().max(1.0) as usize;
        let mut out = Image::new(width, height, self.channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..self.channels {
                    let mut samples = Vec::with_capacity(mx * my);
                    for b in 0..my {
                        for a in 0..mx {
                            let px = (x as f64 + (a as f64 + 0.5) / mx as f64) * sx;
                            let py = (y as f64 + (b as f64 + 0.5) / my as f64) * sy;
                            samples.push(self.sample_clamped(px, py, c));
                        }
                    }
                    out.set(x, y, c, crate::math::stable_mean(&samples));
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        ensure_same(self.shape(), other.shape(), "image difference")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Background behind the volume: a constant color or a per-pixel image.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    Constant(Vec<f64>),
    Image(Image),
}

impl Background {
    pub fn black() -> Self {
        Background::Constant(vec![0.0])
    }

    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        match self {
            Background::Constant(col) => col[c.min(col.len() - 1)],
            Background::Image(img) => img.get(x.min(img.width() - 1), y.min(img.height() - 1), c.min(img.channels() - 1)),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Background::Constant(col) => col.len(),
            Background::Image(img) => img.channels(),
        }
    }

    /// Resizes an image background; constants are unchanged.
    pub fn resized(&self, width: usize, height: usize) -> Background {
        match self {
            Background::Constant(_) => self.clone(),
            Background::Image(img) => Background::Image(img.resize(width, height)),
        }
    }
}
