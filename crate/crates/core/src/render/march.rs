use rayon::prelude::*;

use crate::error::{ensure_same, Error, Result};
use crate::grid::{GridGeom, ScalarGrid, Stencil};
use crate::image::{Background, Image};
use crate::math::Vec3;

use super::{light_field, Camera, CameraBasis, GradientMode, LightConfig, RenderSettings, View};

/// Output of [`raymarch`]: accumulated radiance and final transparency per
/// pixel, both single-channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RayImage {
    pub radiance: Image,
    pub transparency: Image,
}

/// Samples of one ray in index space: `g0 + gd * (t0 + k * delta)` for
/// `k < n`.
struct Ray {
    g0: Vec3,
    gd: Vec3,
    t0: f64,
    n: usize,
}

impl Ray {
    #[inline]
    fn sample(&self, k: usize, delta: f64) -> Vec3 {
        self.g0 + self.gd * (self.t0 + k as f64 * delta)
    }
}

/// Sample lattice `t_near + (k + 1/2) delta` along the ray, restricted to the
/// part inside the volume box.
fn setup_ray(geom: &GridGeom, cam: &Camera, basis: &CameraBasis, x: usize, y: usize, delta: f64) -> Option<Ray> {
    let dir = cam.ray_dir(basis, x as f64 + 0.5, y as f64 + 0.5);
    let cos = dir.dot(basis.forward);
    let t_near = cam.near / cos;
    let t_far = cam.far / cos;
    let g0 = geom.to_index_space(cam.position);
    let gd = dir * (1.0 / geom.cell_size);
    let dims = geom.dims.as_array();
    let (mut ta, mut tb) = (t_near, t_far);
    for a in 0..3 {
        let lo = -0.5;
        let hi = dims[a] as f64 - 0.5;
        if gd[a] == 0.0 {
            if g0[a] < lo || g0[a] > hi {
                return None;
            }
            continue;
        }
        let t1 = (lo - g0[a]) / gd[a];
        let t2 = (hi - g0[a]) / gd[a];
        ta = ta.max(t1.min(t2));
        tb = tb.min(t1.max(t2));
    }
    if ta > tb {
        return None;
    }
    let k_lo = ((ta - t_near) / delta - 0.5).ceil().max(0.0);
    let k_hi = ((tb - t_near) / delta - 0.5).floor();
    if k_hi < k_lo {
        return None;
    }
    Some(Ray {
        g0,
        gd,
        t0: t_near + (k_lo + 0.5) * delta,
        n: (k_hi - k_lo) as usize + 1,
    })
}

fn check_inputs(rho: &ScalarGrid, emission: &ScalarGrid, cam: &Camera, settings: &RenderSettings) -> Result<()> {
    cam.validate()?;
    settings.validate()?;
    ensure_same(rho.dims(), emission.dims(), "density and light grids")?;
    if rho.geom() != emission.geom() {
        return Err(Error::ShapeMismatch("density and light grids are placed differently".into()));
    }
    Ok(())
}

/// Front-to-back emission-absorption march through `rho` with emitted light
/// `emission`.
pub fn raymarch(rho: &ScalarGrid, emission: &ScalarGrid, cam: &Camera, settings: &RenderSettings) -> Result<RayImage> {
    check_inputs(rho, emission, cam, settings)?;
    let geom = *rho.geom();
    let basis = cam.basis();
    let delta = settings.step_size * geom.cell_size;
    let (r, l) = (rho.data(), emission.data());
    let pixels: Vec<(f64, f64)> = (0..cam.width * cam.height)
        .into_par_iter()
        .map(|p| {
            let Some(ray) = setup_ray(&geom, cam, &basis, p % cam.width, p / cam.width, delta) else {
                return (0.0, 1.0);
            };
            let mut radiance = 0.0;
            let mut t = 1.0;
            for k in 0..ray.n {
                let st = Stencil::at(geom.dims, ray.sample(k, delta));
                radiance += t * st.apply(l) * delta;
                t *= (-st.apply(r) * delta).exp();
            }
            (radiance, t)
        })
        .collect();
    let (rad, tr): (Vec<f64>, Vec<f64>) = pixels.into_iter().unzip();
    Ok(RayImage {
        radiance: Image::from_data(cam.width, cam.height, 1, rad)?,
        transparency: Image::from_data(cam.width, cam.height, 1, tr)?,
    })
}

fn background_shape_ok(bg: &Background, width: usize, height: usize) -> Result<()> {
    if let Background::Image(img) = bg {
        ensure_same((img.width(), img.height()), (width, height), "background size")?;
    }
    Ok(())
}

/// `image + transparency * background`; single-channel radiance is
/// broadcast to the background's channel count.
pub fn composite(radiance: &Image, transparency: &Image, background: &Background) -> Result<Image> {
    let (w, h, c) = radiance.shape();
    ensure_same((w, h), (transparency.width(), transparency.height()), "transparency size")?;
    ensure_same(transparency.channels(), 1, "transparency channels")?;
    background_shape_ok(background, w, h)?;
    let channels = c.max(background.channels());
    if c != 1 && c != channels {
        return Err(Error::ShapeMismatch(format!(
            "cannot composite {c}-channel radiance over {channels}-channel background"
        )));
    }
    let mut out = Image::new(w, h, channels);
    for y in 0..h {
        for x in 0..w {
            let t = transparency.get(x, y, 0);
            for ch in 0..channels {
                let v = radiance.get(x, y, ch.min(c - 1)) + t * background.value(x, y, ch);
                out.set(x, y, ch, v);
            }
        }
    }
    Ok(out)
}

pub fn render(rho: &ScalarGrid, lights: &LightConfig, cam: &Camera, settings: &RenderSettings) -> Result<Image> {
    let field = light_field(rho, lights, settings)?;
    let out = raymarch(rho, &field.emission, cam, settings)?;
    composite(&out.radiance, &out.transparency, &settings.background)
}

/// Renders every view, sharing one light grid.
pub fn render_views(rho: &ScalarGrid, lights: &LightConfig, views: &[View], settings: &RenderSettings) -> Result<Vec<Image>> {
    let field = light_field(rho, lights, settings)?;
    views
        .iter()
        .map(|v| {
            let out = raymarch(rho, &field.emission, &v.camera, settings)?;
            composite(&out.radiance, &out.transparency, &v.background)
        })
        .collect()
}

/// Gradients on the density and on the emitted-light grid, accumulated over
/// views.
#[derive(Clone, Debug)]
pub struct GradientAccumulator {
    pub grad_rho: ScalarGrid,
    pub grad_emission: ScalarGrid,
}

impl GradientAccumulator {
    pub fn new(geom: GridGeom) -> Self {
        Self {
            grad_rho: ScalarGrid::zeros(geom),
            grad_emission: ScalarGrid::zeros(geom),
        }
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    *m
}

/// Adds the gradient of `<grad_image, composite(raymarch(rho, emission))>`
/// with respect to `rho` and `emission` (held independent) into `acc`.
pub fn raymarch_vjp(
    rho: &ScalarGrid,
    emission: &ScalarGrid,
    view: &View,
    settings: &RenderSettings,
    grad_image: &Image,
    acc: &mut GradientAccumulator,
) -> Result<()> {
    let cam = &view.camera;
    check_inputs(rho, emission, cam, settings)?;
    ensure_same((grad_image.width(), grad_image.height()), (cam.width, cam.height), "image gradient size")?;
    background_shape_ok(&view.background, cam.width, cam.height)?;
    let channels = grad_image.channels();
    if channels != 1 && channels != view.background.channels().max(1) {
        return Err(Error::ShapeMismatch(format!(
            "{channels}-channel gradient for a {}-channel background",
            view.background.channels()
        )));
    }
    let geom = *rho.geom();
    let dims = geom.dims;
    let basis = cam.basis();
    let delta = settings.step_size * geom.cell_size;
    let (r, l) = (rho.data(), emission.data());
    let normalized = settings.gradient_mode == GradientMode::Normalized;
    let mut g_rho = vec![0.0; dims.len()];
    let mut g_l = vec![0.0; dims.len()];
    let mut weight = if normalized { vec![0.0; dims.len()] } else { Vec::new() };
    let mut samples: Vec<(Stencil, f64, f64)> = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut g_i = 0.0;
            let mut g_t = 0.0;
            for c in 0..channels {
                let g = grad_image.get(x, y, c);
                g_i += g;
                g_t += g * view.background.value(x, y, c);
            }
            if g_i == 0.0 && g_t == 0.0 {
                continue;
            }
            let Some(ray) = setup_ray(&geom, cam, &basis, x, y, delta) else {
                continue;
            };
            samples.clear();
            let mut radiance = 0.0;
            let mut t = 1.0;
            for k in 0..ray.n {
                let st = Stencil::at(dims, ray.sample(k, delta));
                let emitted = t * st.apply(l) * delta;
                radiance += emitted;
                samples.push((st, emitted, t));
                t *= (-st.apply(r) * delta).exp();
            }
            let t_final = t;
            let mut before = 0.0;
            for (st, emitted, t_k) in &samples {
                before += emitted;
                let gr = -delta * (g_i * (radiance - before) + g_t * t_final);
                let ge = g_i * t_k * delta;
                for n in 0..8 {
                    let i = st.idx[n];
                    let w = st.w[n];
                    g_rho[i] += w * gr;
                    g_l[i] += w * ge;
                    if normalized {
                        weight[i] += w;
                    }
                }
            }
        }
    }
    if normalized {
        let touched: Vec<f64> = weight.iter().cloned().filter(|&w| w > 0.0).collect();
        if !touched.is_empty() {
            let reference = median(touched);
            for ((gr, gl), &w) in g_rho.iter_mut().zip(g_l.iter_mut()).zip(&weight) {
                if w > 0.0 {
                    *gr *= reference / w;
                    *gl *= reference / w;
                }
            }
        }
    }
    for (a, g) in acc.grad_rho.data_mut().iter_mut().zip(&g_rho) {
        *a += g;
    }
    for (a, g) in acc.grad_emission.data_mut().iter_mut().zip(&g_l) {
        *a += g;
    }
    Ok(())
}

/// Density gradient of `Σ_v <grads[v], render(rho, views[v])>`, including the
/// light grid's and shadow volume's dependence on the density.
pub fn render_views_vjp(
    rho: &ScalarGrid,
    lights: &LightConfig,
    views: &[View],
    settings: &RenderSettings,
    grads: &[Image],
) -> Result<ScalarGrid> {
    ensure_same(views.len(), grads.len(), "views and image gradients")?;
    let field = light_field(rho, lights, settings)?;
    let mut acc = GradientAccumulator::new(*rho.geom());
    for (view, grad) in views.iter().zip(grads) {
        raymarch_vjp(rho, &field.emission, view, settings, grad, &mut acc)?;
    }
    let mut out = field.vjp(rho, lights, settings, &acc.grad_emission)?;
    out.add_scaled(&acc.grad_rho, 1.0);
    Ok(out)
}

pub fn render_vjp(
    rho: &ScalarGrid,
    lights: &LightConfig,
    cam: &Camera,
    settings: &RenderSettings,
    grad_image: &Image,
) -> Result<ScalarGrid> {
    let view = View::new(cam.clone(), settings.background.clone());
    render_views_vjp(rho, lights, std::slice::from_ref(&view), settings, std::slice::from_ref(grad_image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    fn geom(n: usize) -> GridGeom {
        GridGeom::fitted(Dims::cube(n), Vec3::ZERO, 1.0)
    }

    fn front_camera(w: usize, h: usize) -> Camera {
        Camera::orbit(Vec3::splat(0.5), 2.5, 0.0, 0.0, 35.0, w, h)
    }

    #[test]
    fn empty_volume_is_transparent() {
        let rho = ScalarGrid::zeros(geom(6));
        let out = raymarch(&rho, &rho, &front_camera(8, 8), &RenderSettings::default()).unwrap();
        assert!(out.radiance.data().iter().all(|&v| v == 0.0));
        assert!(out.transparency.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn composite_examples() {
        let img = Image::filled(3, 2, 1, 0.25);
        let half = Image::filled(3, 2, 1, 0.5);
        let out = composite(&img, &half, &Background::Constant(vec![1.0])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.75));
        let zero = Image::new(3, 2, 1);
        let out = composite(&img, &zero, &Background::Constant(vec![1.0, 0.5, 0.2])).unwrap();
        assert_eq!(out.channels(), 3);
        assert!(out.data().iter().all(|&v| v == 0.25));
        let bg = Image::filled(3, 2, 3, 0.7);
        let out = composite(&zero, &Image::filled(3, 2, 1, 1.0), &Background::Image(bg.clone())).unwrap();
        assert_eq!(out, bg);
        assert!(composite(&img, &Image::new(2, 2, 1), &Background::black()).is_err());
    }

    #[test]
    fn no_light_means_black_image() {
        let rho = ScalarGrid::from_fn(geom(6), |p| p.x * p.y + 0.2);
        let img = render(&rho, &LightConfig::ambient_only(0.0), &front_camera(8, 8), &RenderSettings::default()).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn emission_is_linear_without_absorption() {
        let rho = ScalarGrid::zeros(geom(6));
        let l = ScalarGrid::from_fn(geom(6), |p| p.x + p.z);
        let l2 = l.map(|v| 2.0 * v);
        let cam = front_camera(8, 8);
        let s = RenderSettings::default();
        let a = raymarch(&rho, &l, &cam, &s).unwrap().radiance;
        let b = raymarch(&rho, &l2, &cam, &s).unwrap().radiance;
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_camera_is_rejected() {
        let rho = ScalarGrid::zeros(geom(4));
        let mut cam = front_camera(4, 4);
        cam.far = cam.near;
        assert!(raymarch(&rho, &rho, &cam, &RenderSettings::default()).is_err());
    }

    #[test]
    fn zero_image_gradient_gives_zero() {
        let rho = ScalarGrid::from_fn(geom(5), |p| p.y + 0.1);
        let cam = front_camera(6, 6);
        let g = render_vjp(&rho, &LightConfig::single(Vec3::new(0.5, 3.0, 0.5)), &cam, &RenderSettings::default(), &Image::new(6, 6, 1)).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    /// One cell volume, one pixel, ambient light only; with step 0.5 the ray
    /// takes two samples, so `I = a x D (1 + exp(-x D))` with `D` the step.
    #[test]
    fn single_voxel_derivative_matches_closed_form() {
        let g = GridGeom::new(Dims::cube(1), Vec3::ZERO, 1.0);
        let x = 0.8;
        let rho = ScalarGrid::filled(g, x);
        let cam = Camera {
            position: Vec3::new(0.0, 0.0, -5.0),
            look_at: Vec3::ZERO,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_y: 1.0,
            width: 1,
            height: 1,
            near: 4.0,
            far: 10.0,
        };
        let settings = RenderSettings::default().with_mode(GradientMode::Exact);
        let lights = LightConfig::ambient_only(1.0);
        let d = 0.5;
        let img = render(&rho, &lights, &cam, &settings).unwrap();
        assert!((img.get(0, 0, 0) - x * d * (1.0 + (-x * d).exp())).abs() < 1e-12);
        let grad = render_vjp(&rho, &lights, &cam, &settings, &Image::filled(1, 1, 1, 1.0)).unwrap();
        let analytic = d + d * (-x * d).exp() * (1.0 - x * d);
        assert!((grad.data()[0] - analytic).abs() < 1e-12);
        // A target brighter than the render pulls density up; the absorption
        // part of the derivative alone is negative.
        let absorption = -x * d * d * (-x * d).exp();
        assert!(absorption < 0.0);
        let residual = img.get(0, 0, 0) - 10.0;
        let loss_grad = render_vjp(&rho, &lights, &cam, &settings, &Image::filled(1, 1, 1, residual)).unwrap();
        assert!(loss_grad.data()[0] < 0.0);
    }
}
