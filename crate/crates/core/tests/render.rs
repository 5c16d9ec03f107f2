use gtflow::render::{
    light_grid, raymarch, render, render_vjp, Camera, GradientMode, LightConfig, PointLight, RenderSettings,
};
use gtflow::{Background, Dims, GridGeom, Image, ScalarGrid, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_geom(n: usize) -> GridGeom {
    GridGeom::fitted(Dims::cube(n), Vec3::ZERO, 1.0)
}

fn random_grid(geom: GridGeom, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarGrid {
    let data = (0..geom.dims.len()).map(|_| rng.gen_range(lo..hi)).collect();
    ScalarGrid::from_data(geom, data).unwrap()
}

fn random_image(w: usize, h: usize, c: usize, rng: &mut ChaCha8Rng) -> Image {
    let data = (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Image::from_data(w, h, c, data).unwrap()
}

fn lights() -> LightConfig {
    LightConfig {
        points: vec![
            PointLight {
                position: Vec3::new(0.6, 2.5, 0.3),
                intensity: 0.85,
            },
            PointLight {
                position: Vec3::new(-2.0, 0.7, 0.4),
                intensity: 0.4,
            },
        ],
        ambient: 0.64,
    }
}

fn inner(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Directional derivative of `<g, render(rho)>` along `v` by central
/// differences.
fn fd_directional(
    rho: &ScalarGrid,
    v: &ScalarGrid,
    g: &Image,
    cam: &Camera,
    settings: &RenderSettings,
    lights: &LightConfig,
) -> f64 {
    let eps = 1e-6;
    let mut plus = rho.clone();
    plus.add_scaled(v, eps);
    let mut minus = rho.clone();
    minus.add_scaled(v, -eps);
    let fp = inner(g, &render(&plus, lights, cam, settings).unwrap());
    let fm = inner(g, &render(&minus, lights, cam, settings).unwrap());
    (fp - fm) / (2.0 * eps)
}

#[test]
fn exact_scatter_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let geom = unit_geom(8);
    let cam = Camera::orbit(Vec3::splat(0.5), 2.2, 25.0, 15.0, 40.0, 16, 16);
    let settings = RenderSettings::default()
        .with_mode(GradientMode::Exact)
        .with_background(Background::Constant(vec![0.2, 0.5, 0.9]));
    for trial in 0..3 {
        let rho = random_grid(geom, &mut rng, 0.2, 1.5);
        let v = random_grid(geom, &mut rng, -1.0, 1.0);
        let g = random_image(16, 16, 3, &mut rng);
        let grad = render_vjp(&rho, &lights(), &cam, &settings, &g).unwrap();
        let analytic = grad.dot(&v);
        let fd = fd_directional(&rho, &v, &g, &cam, &settings, &lights());
        let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
        assert!(rel < 1e-5, "trial {trial}: analytic {analytic} fd {fd} rel {rel}");
    }
}

/// Nearly parallel rays whose footprint is aligned with the cells give every
/// cell the same accumulated weight, where normalization is the identity up
/// to the median rescale.
fn aligned_setup(n: usize) -> (GridGeom, Camera) {
    let geom = GridGeom::new(Dims::cube(n), Vec3::ZERO, 1.0);
    let c = geom.center();
    let distance = 1.0e6;
    let pixels = 2 * n;
    // Pixel pitch of half a cell at the volume center.
    let tan_half = 0.5 * 0.5 * pixels as f64 / distance;
    // Near plane placed so samples sit a quarter step inside the entry face.
    let entry = distance - 0.5 * n as f64;
    let near = entry - 200.0;
    let cam = Camera {
        position: c - Vec3::new(0.0, 0.0, distance),
        look_at: c,
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: 2.0 * tan_half.atan().to_degrees(),
        width: pixels,
        height: pixels,
        near,
        far: distance * 2.0,
    };
    (geom, cam)
}

#[test]
fn normalized_scatter_matches_finite_differences_with_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (geom, cam) = aligned_setup(8);
    let settings = RenderSettings::default().with_background(Background::Constant(vec![0.3]));
    let lights = LightConfig::single(geom.center() + Vec3::new(0.5, 30.0, -0.25));
    let rho = random_grid(geom, &mut rng, 0.01, 0.1);
    let v = random_grid(geom, &mut rng, -1.0, 1.0);
    let g = random_image(16, 16, 1, &mut rng);
    let grad = render_vjp(&rho, &lights, &cam, &settings, &g).unwrap();
    let exact = render_vjp(&rho, &lights, &cam, &settings.with_mode(GradientMode::Exact), &g).unwrap();
    let fd = fd_directional(&rho, &v, &g, &cam, &settings, &lights);
    let rel = (grad.dot(&v) - fd).abs() / fd.abs();
    assert!(rel < 1e-3, "normalized {} fd {fd} rel {rel}", grad.dot(&v));
    let rel_exact = (exact.dot(&v) - fd).abs() / fd.abs();
    assert!(rel_exact < 1e-5, "exact rel {rel_exact}");
}

#[test]
fn normalized_scatter_preserves_interior_total() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 24;
    let (geom, cam) = aligned_setup(n);
    let settings = RenderSettings::default();
    let lights = LightConfig::ambient_only(0.64);
    let rho = random_grid(geom, &mut rng, 0.0, 0.05);
    let g = random_image(cam.width, cam.height, 1, &mut rng);
    let norm = render_vjp(&rho, &lights, &cam, &settings, &g).unwrap();
    let exact = render_vjp(&rho, &lights, &cam, &settings.with_mode(GradientMode::Exact), &g).unwrap();
    let interior = |grid: &ScalarGrid| -> f64 {
        let mut s = 0.0;
        for k in 2..n - 2 {
            for j in 2..n - 2 {
                for i in 2..n - 2 {
                    s += grid.get(i, j, k);
                }
            }
        }
        s
    };
    let (a, b) = (interior(&norm), interior(&exact));
    assert!(((a - b) / b).abs() < 1e-6, "normalized {a} exact {b}");
}

/// Homogeneous slab filling the view: mean absolute relative error of the
/// transparency against `exp(-d w)` for a given step size.
fn slab_error(step: f64) -> (f64, f64) {
    let n = 64;
    let geom = GridGeom::new(Dims::cube(n), Vec3::ZERO, 1.0 / n as f64);
    let d = 0.1;
    let rho = ScalarGrid::filled(geom, d);
    let c = geom.center();
    let cam = Camera {
        position: c - Vec3::new(0.0, 0.0, 3.0),
        look_at: c,
        up: Vec3::new(0.0, 1.0, 0.0),
        fov_y: 15.0,
        width: 32,
        height: 32,
        near: 1.0,
        far: 10.0,
    };
    let settings = RenderSettings {
        step_size: step,
        ..RenderSettings::default()
    };
    let out = raymarch(&rho, &ScalarGrid::zeros(geom), &cam, &settings).unwrap();
    let basis = cam.basis();
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let dir = cam.ray_dir(&basis, x as f64 + 0.5, y as f64 + 0.5);
            // Slab of unit thickness perpendicular to the view axis.
            let w = 1.0 / dir.dot(basis.forward);
            let expected = (-d * w).exp();
            let rel = ((out.transparency.get(x, y, 0) - expected) / expected).abs();
            sum += rel;
            max = max.max(rel);
        }
    }
    (sum / (cam.width * cam.height) as f64, max)
}

#[test]
fn homogeneous_slab_follows_beer_lambert() {
    let (mean_half, max_half) = slab_error(0.5);
    let (mean_quarter, _) = slab_error(0.25);
    assert!(max_half < 1e-3, "max rel error {max_half}");
    assert!(mean_half / mean_quarter >= 1.8, "{mean_half} / {mean_quarter}");
}

#[test]
fn ambient_light_grid_matches_formula() {
    let geom = unit_geom(6);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rho = random_grid(geom, &mut rng, 0.0, 1.0);
    let l = light_grid(&rho, &LightConfig::ambient_only(0.64), &RenderSettings::default()).unwrap();
    for (a, b) in l.data().iter().zip(rho.data()) {
        assert_eq!(*a, 0.64 * b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adding_density_never_increases_transparency(seed in 0u64..1000, cell in 0usize..216, extra in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geom = unit_geom(6);
        let rho = random_grid(geom, &mut rng, 0.0, 1.0);
        let mut more = rho.clone();
        more.data_mut()[cell] += extra;
        let cam = Camera::orbit(Vec3::splat(0.5), 2.0, seed as f64, 10.0, 45.0, 10, 10);
        let s = RenderSettings::default();
        let zero = ScalarGrid::zeros(geom);
        let a = raymarch(&rho, &zero, &cam, &s).unwrap().transparency;
        let b = raymarch(&more, &zero, &cam, &s).unwrap().transparency;
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!(*y <= *x);
        }
    }

    #[test]
    fn no_lights_render_black(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_grid(unit_geom(5), &mut rng, 0.0, 2.0);
        let cam = Camera::orbit(Vec3::splat(0.5), 2.0, 40.0, 5.0, 45.0, 8, 8);
        let img = render(&rho, &LightConfig::ambient_only(0.0), &cam, &RenderSettings::default()).unwrap();
        prop_assert!(img.data().iter().all(|&v| v == 0.0));
    }
}
