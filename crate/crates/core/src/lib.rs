//! Reconstruction of smoke density, inflow and motion from calibrated image
//! sequences by gradient descent through a differentiable transport operator
//! and a differentiable volumetric renderer.

pub mod adam;
pub mod advect;
pub mod config;
pub mod disc;
pub mod error;
pub mod eval;
pub mod grid;
pub mod hull;
pub mod image;
pub mod io;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod render;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{Dims, GridGeom, ScalarGrid, VectorGrid};
pub use image::{Background, Image};
pub use math::Vec3;
