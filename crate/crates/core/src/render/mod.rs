//! Differentiable volumetric renderer: emission with single-scattering point
//! lights and an ambient term, Beer-Lambert absorption, background
//! compositing, and reverse-mode gradients.

mod camera;
mod light;
mod march;

pub use camera::{Camera, CameraBasis};
pub use light::{
    light_field, light_grid, LightConfig, LightField, PointLight, DEFAULT_AMBIENT, DEFAULT_POINT_INTENSITY,
};
pub use march::{
    composite, raymarch, raymarch_vjp, render, render_views, render_views_vjp, render_vjp, GradientAccumulator,
    RayImage,
};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Background;

/// How per-sample gradients are gathered onto the density grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientMode {
    /// Plain trilinear scatter; the exact Jacobian transpose.
    Exact,
    /// Scatter divided by the accumulated interpolation weight of each cell,
    /// rescaled by the median weight of the touched cells.
    #[default]
    Normalized,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(GradientMode::Exact),
            "normalized" => Ok(GradientMode::Normalized),
            other => Err(Error::InvalidInput(format!("unknown gradient mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    /// Ray step as a fraction of the cell size.
    pub step_size: f64,
    /// Shadow-volume step as a fraction of the cell size.
    pub shadow_step_size: f64,
    pub background: Background,
    pub gradient_mode: GradientMode,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            shadow_step_size: 1.0,
            background: Background::black(),
            gradient_mode: GradientMode::Normalized,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("step_size", self.step_size), ("shadow_step_size", self.shadow_step_size)] {
            if !(v > 0.0 && v <= 2.0) {
                return Err(Error::InvalidInput(format!("{name} {v} outside (0, 2]")));
            }
        }
        Ok(())
    }

    pub fn with_background(&self, background: Background) -> Self {
        Self {
            background,
            ..self.clone()
        }
    }

    pub fn with_mode(&self, gradient_mode: GradientMode) -> Self {
        Self {
            gradient_mode,
            ..self.clone()
        }
    }
}

/// A calibrated camera with the background seen behind the volume.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub background: Background,
}

impl View {
    pub fn new(camera: Camera, background: Background) -> Self {
        Self { camera, background }
    }

    /// Same view at another resolution; image backgrounds are resized.
    pub fn with_resolution(&self, width: usize, height: usize) -> View {
        View {
            camera: self.camera.with_resolution(width, height),
            background: self.background.resized(width, height),
        }
    }
}
