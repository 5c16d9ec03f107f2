//! Visual hulls carved from silhouettes, including the single-view variant
//! that adds rotated, mirrored auxiliary views.

use rayon::prelude::*;

use crate::error::{ensure_same, Error, Result};
use crate::grid::{GridGeom, ScalarGrid};
use crate::image::Image;
use crate::math::Vec3;
use crate::render::Camera;

pub const DEFAULT_THRESHOLD: f64 = 0.04;
pub const DEFAULT_MASK_BLUR: f64 = 1.0;
pub const DEFAULT_VOLUME_BLUR: f64 = 0.5;
pub const DEFAULT_AUX_VIEWS: usize = 4;

/// Soft silhouette of one view, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewMask {
    pub mask: Image,
    pub camera: Camera,
}

impl ViewMask {
    pub fn new(mask: Image, camera: Camera) -> Result<Self> {
        ensure_same(mask.channels(), 1, "mask channels")?;
        ensure_same((mask.width(), mask.height()), (camera.width, camera.height), "mask size")?;
        if mask.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("mask values must lie in [0, 1]".into()));
        }
        Ok(Self { mask, camera })
    }
}

/// Thresholds a background-subtracted target (`H(0) = 1`, maximum over
/// channels), then blurs the binary mask by `blur_sigma_px`.
pub fn binarize(target: &Image, camera: &Camera, eps: f64, blur_sigma_px: f64) -> Result<ViewMask> {
    let binary = target.max_channel().map(|v| if v - eps >= 0.0 { 1.0 } else { 0.0 });
    let mask = binary.gaussian_blur(blur_sigma_px).map(|v| v.clamp(0.0, 1.0));
    ViewMask::new(mask, camera.clone())
}

/// Product over views of each cell center's projected mask value, then a
/// volumetric blur of `sigma_vol` cells (skipped when zero).
pub fn carve(masks: &[ViewMask], geom: GridGeom, sigma_vol: f64) -> Result<ScalarGrid> {
    if masks.is_empty() {
        return Err(Error::InvalidInput("visual hull needs at least one mask".into()));
    }
    for m in masks {
        m.camera.validate()?;
    }
    let bases: Vec<_> = masks.iter().map(|m| m.camera.basis()).collect();
    let dims = geom.dims;
    let data: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = dims.coords(idx);
            let p = geom.cell_center(i, j, k);
            let mut v = 1.0;
            for (m, b) in masks.iter().zip(&bases) {
                let s = m
                    .camera
                    .project(b, p)
                    .and_then(|(px, py, _)| m.mask.sample_bilinear(px, py, 0))
                    .unwrap_or(0.0);
                v *= s;
                if v == 0.0 {
                    break;
                }
            }
            v
        })
        .collect();
    let hull = ScalarGrid::from_data(geom, data)?.gaussian_blur(sigma_vol);
    Ok(hull.map(|v| v.clamp(0.0, 1.0)))
}

/// Mirror image of `mask` across the projection of the vertical line through
/// `pivot`.
pub fn mirror_about_projected_axis(mask: &ViewMask, pivot: Vec3) -> Result<Image> {
    let cam = &mask.camera;
    let b = cam.basis();
    let up = Vec3::new(0.0, 1.0, 0.0);
    let (a, c) = match (cam.project(&b, pivot), cam.project(&b, pivot + up * 0.1 * (pivot - cam.position).norm())) {
        (Some((ax, ay, _)), Some((cx, cy, _))) => ((ax, ay), (cx, cy)),
        _ => return Err(Error::InvalidInput("rotation axis is not visible from the camera".into())),
    };
    let (dx, dy) = (c.0 - a.0, c.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 < 1e-18 {
        return Err(Error::InvalidInput("rotation axis projects to a point".into()));
    }
    let (w, h) = (mask.mask.width(), mask.mask.height());
    let mut out = Image::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = ((px - a.0) * dx + (py - a.1) * dy) / len2;
            let (fx, fy) = (a.0 + t * dx, a.1 + t * dy);
            let (rx, ry) = (2.0 * fx - px, 2.0 * fy - py);
            out.set(x, y, 0, mask.mask.sample_bilinear(rx, ry, 0).unwrap_or(0.0));
        }
    }
    Ok(out)
}

/// Auxiliary views for a single input: the camera rotated about the volume's
/// vertical axis in even steps, each with the symmetrized mask.
pub fn auxiliary_masks(mask: &ViewMask, geom: &GridGeom, n_aux: usize) -> Result<Vec<ViewMask>> {
    let pivot = geom.center();
    let mirrored = mirror_about_projected_axis(mask, pivot)?;
    let data = mask.mask.data().iter().zip(mirrored.data()).map(|(a, b)| a.max(*b)).collect();
    let sym = Image::from_data(mask.mask.width(), mask.mask.height(), 1, data)?;
    (1..=n_aux)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / (n_aux + 1) as f64;
            ViewMask::new(sym.clone(), mask.camera.rotated_about_y(pivot, angle))
        })
        .collect()
}

pub fn single_view_hull(mask: &ViewMask, geom: GridGeom, n_aux: usize, sigma_vol: f64) -> Result<ScalarGrid> {
    let mut masks = vec![mask.clone()];
    masks.extend(auxiliary_masks(mask, &geom, n_aux)?);
    carve(&masks, geom, sigma_vol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    fn geom() -> GridGeom {
        GridGeom::fitted(Dims::cube(10), Vec3::ZERO, 1.0)
    }

    fn cam(az: f64) -> Camera {
        Camera::orbit(Vec3::splat(0.5), 2.5, az, 0.0, 40.0, 16, 16)
    }

    #[test]
    fn binarize_examples() {
        let c = cam(0.0);
        let zero = binarize(&Image::new(16, 16, 1), &c, 0.04, 1.0).unwrap();
        assert!(zero.mask.data().iter().all(|&v| v == 0.0));
        let ones = binarize(&Image::filled(16, 16, 3, 1.0), &c, 0.04, 1.0).unwrap();
        assert!(ones.mask.data().iter().all(|&v| v == 1.0));
        let edge = binarize(&Image::filled(16, 16, 1, 0.04), &c, 0.04, 0.0).unwrap();
        assert!(edge.mask.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn carve_examples() {
        let ones = ViewMask::new(Image::filled(16, 16, 1, 1.0), cam(0.0)).unwrap();
        let hull = carve(&[ones.clone()], geom(), 0.0).unwrap();
        assert!(hull.data().iter().all(|&v| v == 1.0));
        let zeros = ViewMask::new(Image::new(16, 16, 1), cam(60.0)).unwrap();
        let hull = carve(&[ones, zeros], geom(), 0.5).unwrap();
        assert!(hull.data().iter().all(|&v| v == 0.0));
        assert!(carve(&[], geom(), 0.5).is_err());
    }

    #[test]
    fn symmetric_mask_is_its_own_auxiliary() {
        let mut img = Image::new(16, 16, 1);
        for y in 3..12 {
            for x in 5..11 {
                img.set(x, y, 0, 1.0);
            }
        }
        let m = ViewMask::new(img.clone(), cam(0.0)).unwrap();
        let aux = auxiliary_masks(&m, &geom(), 4).unwrap();
        assert_eq!(aux.len(), 4);
        for a in aux {
            for (x, y) in a.mask.data().iter().zip(img.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_ones_single_view_hull_is_full_inside() {
        let m = ViewMask::new(Image::filled(16, 16, 1, 1.0), cam(0.0)).unwrap();
        let hull = single_view_hull(&m, geom(), 4, 0.0).unwrap();
        assert!(hull.data().iter().all(|&v| v == 1.0));
    }
}
