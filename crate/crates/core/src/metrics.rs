//! Evaluation metrics for volumes, images and transport consistency.
//!
//! Reductions run sequentially in index order, so every metric is
//! deterministic.

use crate::advect::{advect, AdvectionScheme};
use crate::error::{ensure_same, Error, Result};
use crate::grid::{ScalarGrid, VectorGrid};
use crate::image::Image;

/// Cells with a mask value above this count as inside.
pub const MASK_LEVEL: f64 = 0.5;
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_WINDOW: usize = 11;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn masked_mean_sq(diff2: impl Iterator<Item = (f64, bool)>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (d, inside) in diff2 {
        if inside {
            sum += d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("metric mask selects no cells".into()));
    }
    Ok(sum / n as f64)
}

/// Root mean squared difference, optionally over cells where `mask > 0.5`.
pub fn rmse(a: &ScalarGrid, b: &ScalarGrid, mask: Option<&ScalarGrid>) -> Result<f64> {
    ensure_same(a.dims(), b.dims(), "rmse operands")?;
    if let Some(m) = mask {
        ensure_same(a.dims(), m.dims(), "rmse mask")?;
    }
    let it = a.data().iter().zip(b.data()).enumerate().map(|(i, (x, y))| {
        let inside = mask.map_or(true, |m| m.data()[i] > MASK_LEVEL);
        ((x - y) * (x - y), inside)
    });
    Ok(masked_mean_sq(it)?.sqrt())
}

/// RMSE of the vector difference magnitude.
pub fn rmse_vector(a: &VectorGrid, b: &VectorGrid, mask: Option<&ScalarGrid>) -> Result<f64> {
    ensure_same(a.dims(), b.dims(), "rmse operands")?;
    if let Some(m) = mask {
        ensure_same(a.dims(), m.dims(), "rmse mask")?;
    }
    let it = a.data().iter().zip(b.data()).enumerate().map(|(i, (x, y))| {
        let d = *x - *y;
        (d.dot(d), mask.map_or(true, |m| m.data()[i] > MASK_LEVEL))
    });
    Ok(masked_mean_sq(it)?.sqrt())
}

pub fn image_mse(img: &Image, reference: &Image) -> Result<f64> {
    ensure_same(img.shape(), reference.shape(), "image metric operands")?;
    let n = img.data().len();
    if n == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let s: f64 = img.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / n as f64)
}

/// `10 log10(peak² / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(img: &Image, reference: &Image, peak: f64) -> Result<f64> {
    let mse = image_mse(img, reference)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an array shaped `shape` (first axis
/// fastest) along every axis whose extent is larger than one.
fn filter_valid(data: &[f64], shape: [usize; 3], w: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let k = w.len();
    let mut cur = data.to_vec();
    let mut sh = shape;
    for axis in 0..3 {
        if sh[axis] == 1 {
            continue;
        }
        let mut out_sh = sh;
        out_sh[axis] = sh[axis] + 1 - k;
        let stride = [1, sh[0], sh[0] * sh[1]];
        let out_stride = [1, out_sh[0], out_sh[0] * out_sh[1]];
        let mut out = vec![0.0; out_sh[0] * out_sh[1] * out_sh[2]];
        for z in 0..out_sh[2] {
            for y in 0..out_sh[1] {
                for x in 0..out_sh[0] {
                    let base = x * stride[0] + y * stride[1] + z * stride[2];
                    let acc: f64 = w.iter().enumerate().map(|(t, wt)| wt * cur[base + t * stride[axis]]).sum();
                    out[x * out_stride[0] + y * out_stride[1] + z * out_stride[2]] = acc;
                }
            }
        }
        cur = out;
        sh = out_sh;
    }
    (cur, sh)
}

/// Mean local SSIM of two equally shaped arrays, dynamic range 1.
fn ssim_array(a: &[f64], b: &[f64], shape: [usize; 3]) -> f64 {
    let w = gaussian_window();
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect() };
    let (mu_a, _) = filter_valid(a, shape, &w);
    let (mu_b, _) = filter_valid(b, shape, &w);
    let (aa, _) = filter_valid(&prod(&|x, _| x * x), shape, &w);
    let (bb, _) = filter_valid(&prod(&|_, y| y * y), shape, &w);
    let (ab, _) = filter_valid(&prod(&|x, y| x * y), shape, &w);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM over 11×11 Gaussian windows (σ = 1.5), averaged over channels.
pub fn ssim(img: &Image, reference: &Image) -> Result<f64> {
    ensure_same(img.shape(), reference.shape(), "ssim operands")?;
    let (w, h, ch) = img.shape();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let channel = |im: &Image, c: usize| -> Vec<f64> { im.data().iter().skip(c).step_by(ch).copied().collect() };
    let total: f64 = (0..ch)
        .map(|c| ssim_array(&channel(img, c), &channel(reference, c), [w, h, 1]))
        .sum();
    Ok(total / ch as f64)
}

/// SSIM of two volumes with an 11³ Gaussian window.
pub fn ssim_volume(a: &ScalarGrid, b: &ScalarGrid) -> Result<f64> {
    ensure_same(a.dims(), b.dims(), "ssim operands")?;
    let shape = a.dims().as_array();
    if shape.iter().any(|&n| n < SSIM_WINDOW) {
        return Err(Error::InvalidInput(format!("volume ssim needs at least {SSIM_WINDOW} cells per axis")));
    }
    Ok(ssim_array(a.data(), b.data(), shape))
}

/// Density entering transport at frame `t`: `max(ρ + inflow, 0)`.
pub fn compose_inflow(rho: &ScalarGrid, inflow: Option<&ScalarGrid>) -> Result<ScalarGrid> {
    match inflow {
        None => Ok(rho.clone()),
        Some(q) => rho.zip_map(q, |r, i| (r + i).max(0.0)),
    }
}

/// Per frame `t ≥ 1`, the RMSE of `A(ρ[t-1] (+ inflow[t-1]), u[t-1])`
/// against `ρ[t]` over cells where `hulls[t] > 0.5`.
pub fn transport_error(
    rho: &[ScalarGrid],
    u: &[VectorGrid],
    hulls: &[ScalarGrid],
    inflow: Option<&[ScalarGrid]>,
    scheme: AdvectionScheme,
) -> Result<Vec<f64>> {
    let f = rho.len();
    if u.len() + 1 < f || hulls.len() != f || inflow.is_some_and(|q| q.len() + 1 < f) {
        return Err(Error::ShapeMismatch(format!(
            "transport error: {} densities, {} velocities, {} hulls",
            f,
            u.len(),
            hulls.len()
        )));
    }
    (1..f)
        .map(|t| {
            let src = compose_inflow(&rho[t - 1], inflow.map(|q| &q[t - 1]))?;
            let moved = advect(&src, &u[t - 1], scheme)?;
            rmse(&moved, &rho[t], Some(&hulls[t]))
        })
        .collect()
}

/// Advects `rho_init` once per velocity field in order.
pub fn warp_test(rho_init: &ScalarGrid, u: &[VectorGrid], scheme: AdvectionScheme) -> Result<ScalarGrid> {
    let mut rho = rho_init.clone();
    for v in u {
        rho = advect(&rho, v, scheme)?;
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Dims, GridGeom};
    use crate::math::Vec3;

    fn geom(n: usize) -> GridGeom {
        GridGeom::new(Dims::cube(n), Vec3::ZERO, 1.0)
    }

    #[test]
    fn rmse_of_constant_offset() {
        let a = ScalarGrid::filled(geom(4), 1.0);
        let b = ScalarGrid::filled(geom(4), 1.25);
        assert_eq!(rmse(&a, &a, None).unwrap(), 0.0);
        assert!((rmse(&a, &b, None).unwrap() - 0.25).abs() < 1e-15);
        let empty = ScalarGrid::zeros(geom(4));
        assert!(rmse(&a, &b, Some(&empty)).is_err());
    }

    #[test]
    fn psnr_reference_values() {
        let a = Image::filled(4, 4, 1, 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
        let b = Image::filled(4, 4, 1, 0.6);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = Image::filled(4, 4, 1, 1.5);
        assert!(psnr(&a, &c, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let img = Image::from_data(16, 16, 1, (0..256).map(|i| ((i * 37) % 17) as f64 / 17.0).collect()).unwrap();
        assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&Image::new(8, 8, 1), &Image::new(8, 8, 1)).is_err());
    }

    #[test]
    fn ssim_of_constants_is_the_luminance_term() {
        let (m1, m2) = (0.3, 0.5);
        let a = Image::filled(12, 12, 1, m1);
        let b = Image::filled(12, 12, 1, m2);
        let c1 = SSIM_K1 * SSIM_K1;
        let expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn transport_error_of_static_field() {
        let g = geom(6);
        let rho = ScalarGrid::from_fn(g, |p| p.x + p.y);
        let still = VectorGrid::zeros(g);
        let hull = ScalarGrid::filled(g, 1.0);
        let e = transport_error(
            &[rho.clone(), rho.clone()],
            &[still.clone(), still.clone()],
            &[hull.clone(), hull.clone()],
            None,
            AdvectionScheme::default(),
        )
        .unwrap();
        assert_eq!(e, vec![0.0]);
        let other = rho.map(|v| v + 0.1);
        let e = transport_error(&[rho.clone(), other.clone()], &[still.clone()], &[hull.clone(), hull.clone()], None, AdvectionScheme::default())
            .unwrap();
        assert!((e[0] - rmse(&rho, &other, None).unwrap()).abs() < 1e-15);
    }
}
