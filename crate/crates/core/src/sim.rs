//! Synthetic ground truth: a buoyant smoke plume on a collocated grid and the
//! on-disk scene bundle that packages its renderings.
//!
//! One simulation step self-advects the velocity, adds buoyancy, projects the
//! result onto the null space of the same divergence stencil the
//! reconstruction penalizes, transports the density and finally adds the
//! inflow source.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advect::{advect, advect_vector, AdvectionScheme};
use crate::error::{ensure_same, Error, Result};
use crate::grid::{Dims, GridGeom, ScalarGrid, VectorGrid};
use crate::image::{Background, Image};
use crate::io::{self, format_vec3, KeyValues};
use crate::math::Vec3;
use crate::render::{render_views, Camera, LightConfig, RenderSettings, View};

#[derive(Clone, Debug, PartialEq)]
pub struct PlumeScenario {
    pub dims: Dims,
    /// World size of the longest axis.
    pub extent: f64,
    pub frames: usize,
    /// Steps simulated before frame 0 is recorded.
    pub warmup: usize,
    /// Inflow disk center in world units; the disk lies in an xz plane.
    pub inflow_center: Vec3,
    pub inflow_radius: f64,
    /// Density added per step at the disk center.
    pub inflow_rate: f64,
    /// Upward velocity gained per step per unit density (world units / frame²).
    pub buoyancy: f64,
    /// Relative amplitude of the seeded inflow perturbation.
    pub noise: f64,
    pub seed: u64,
    pub jacobi_iterations: usize,
}

impl Default for PlumeScenario {
    fn default() -> Self {
        Self {
            dims: Dims::cube(32),
            extent: 1.0,
            frames: 20,
            warmup: 12,
            inflow_center: Vec3::new(0.5, 0.1, 0.5),
            inflow_radius: 0.16,
            inflow_rate: 1.5,
            buoyancy: 4e-3,
            noise: 0.6,
            seed: 7,
            jacobi_iterations: 200,
        }
    }
}

impl PlumeScenario {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidInput("scenario dims must be positive".into()));
        }
        if self.frames < 2 {
            return Err(Error::InvalidInput(format!("scenario needs at least 2 frames, got {}", self.frames)));
        }
        let nonneg = [self.inflow_radius, self.inflow_rate, self.buoyancy, self.noise];
        if !(self.extent > 0.0) || nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("scenario parameters must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn geom(&self) -> GridGeom {
        GridGeom::fitted(self.dims, Vec3::ZERO, self.extent)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let d = self.dims;
        kv.set("scenario.dims", format!("{} {} {}", d.nx, d.ny, d.nz));
        kv.set("scenario.extent", self.extent);
        kv.set("scenario.frames", self.frames);
        kv.set("scenario.warmup", self.warmup);
        kv.set("scenario.inflow_center", format_vec3(self.inflow_center));
        kv.set("scenario.inflow_radius", self.inflow_radius);
        kv.set("scenario.inflow_rate", self.inflow_rate);
        kv.set("scenario.buoyancy", self.buoyancy);
        kv.set("scenario.noise", self.noise);
        kv.set("scenario.seed", self.seed);
        kv.set("scenario.jacobi_iterations", self.jacobi_iterations);
        kv
    }
}

/// Seeded low-frequency modulation of the inflow in space and time.
#[derive(Clone, Debug)]
struct InflowNoise {
    waves: Vec<[f64; 5]>,
    wobble: [f64; 4],
}

impl InflowNoise {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..4)
            .map(|_| {
                [
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(-6.0..6.0),
                    rng.gen_range(0.2..0.6),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.5..1.0),
                ]
            })
            .collect();
        let wobble = [
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.0..std::f64::consts::TAU),
            rng.gen_range(0.1..0.3),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ];
        Self { waves, wobble }
    }

    /// Value in roughly `[-1, 1]` at horizontal offset `(x, z)` and step `t`.
    fn value(&self, x: f64, z: f64, t: f64) -> f64 {
        let norm: f64 = self.waves.iter().map(|w| w[4]).sum();
        self.waves
            .iter()
            .map(|w| w[4] * (w[0] * x + w[1] * z + w[2] * t + w[3]).sin())
            .sum::<f64>()
            / norm
    }

    /// Horizontal drift of the disk center, as a fraction of the radius.
    fn drift(&self, t: f64) -> (f64, f64) {
        (
            0.5 * (self.wobble[0] * t + self.wobble[1]).sin(),
            0.5 * (self.wobble[2] * t + self.wobble[3]).sin(),
        )
    }
}

/// Density emitted by the inflow disk at step `step`.
pub fn inflow_source(scenario: &PlumeScenario, geom: &GridGeom, step: usize) -> ScalarGrid {
    let noise = InflowNoise::new(scenario.seed);
    let t = step as f64;
    let (dx, dz) = noise.drift(t);
    let r = scenario.inflow_radius;
    let c = scenario.inflow_center + Vec3::new(dx * r, 0.0, dz * r);
    let half_height = 1.5 * geom.cell_size;
    ScalarGrid::from_fn(*geom, |p| {
        let q = p - c;
        let d = (q.x * q.x + q.z * q.z).sqrt();
        if d >= r || q.y.abs() > half_height || r == 0.0 {
            return 0.0;
        }
        let falloff = 1.0 - (d / r).powi(2);
        let n = noise.value(q.x / r, q.z / r, t);
        (scenario.inflow_rate * falloff * (1.0 + scenario.noise * n)).max(0.0)
    })
}

/// Diagonal of `D Dᵀ` for the divergence stencil `D` of [`VectorGrid::divergence`].
fn normal_diagonal(geom: &GridGeom) -> Vec<f64> {
    let d = geom.dims;
    let h2 = geom.cell_size * geom.cell_size;
    let n = d.as_array();
    (0..d.len())
        .map(|idx| {
            let c = d.coords(idx);
            let c = [c.0, c.1, c.2];
            (0..3)
                .map(|a| {
                    if n[a] < 2 {
                        0.0
                    } else if c[a] == 0 || c[a] == n[a] - 1 {
                        2.0 / h2
                    } else {
                        0.5 / h2
                    }
                })
                .sum()
        })
        .collect()
}

/// `out = D Dᵀ p`, evaluated line by line along each axis.
fn apply_normal(geom: &GridGeom, p: &[f64], out: &mut [f64]) {
    let d = geom.dims;
    let h = geom.cell_size;
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = d.as_array();
    let mut line = Vec::new();
    let mut adj = Vec::new();
    for axis in 0..3 {
        let len = n[axis];
        if len < 2 {
            continue;
        }
        let s = d.stride(axis);
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..n[o2] {
            for a in 0..n[o1] {
                let mut c = [0; 3];
                c[o1] = a;
                c[o2] = b;
                let base = d.index(c[0], c[1], c[2]);
                line.clear();
                line.extend((0..len).map(|m| p[base + m * s]));
                adj.clear();
                adj.resize(len, 0.0);
                diff_line_adjoint(&line, h, &mut adj);
                for m in 0..len {
                    out[base + m * s] += diff_line(&adj, h, m);
                }
            }
        }
    }
}

/// One entry of the central difference along a line, one-sided at the ends.
fn diff_line(f: &[f64], h: f64, m: usize) -> f64 {
    let n = f.len();
    if m == 0 {
        (f[1] - f[0]) / h
    } else if m == n - 1 {
        (f[m] - f[m - 1]) / h
    } else {
        (f[m + 1] - f[m - 1]) / (2.0 * h)
    }
}

fn diff_line_adjoint(g: &[f64], h: f64, out: &mut [f64]) {
    let n = g.len();
    for m in 0..n {
        if m == 0 {
            out[1] += g[0] / h;
            out[0] -= g[0] / h;
        } else if m == n - 1 {
            out[m] += g[m] / h;
            out[m - 1] -= g[m] / h;
        } else {
            out[m + 1] += g[m] / (2.0 * h);
            out[m - 1] -= g[m] / (2.0 * h);
        }
    }
}

/// Removes the divergent part of `u` by damped Jacobi iterations on
/// `D Dᵀ p = D u` followed by `u - Dᵀ p`, which is the least-squares
/// projection onto fields with zero discrete divergence. `warm` seeds the
/// pressure; the final pressure is returned for warm starts.
pub fn project(u: &VectorGrid, iterations: usize, warm: Option<&ScalarGrid>) -> Result<(VectorGrid, ScalarGrid)> {
    const OMEGA: f64 = 2.0 / 3.0;
    let geom = *u.geom();
    let rhs = u.divergence();
    let mut p = match warm {
        Some(w) => {
            ensure_same(w.dims(), u.dims(), "pressure warm start")?;
            w.clone()
        }
        None => ScalarGrid::zeros(geom),
    };
    let diag = normal_diagonal(&geom);
    let mut ap = vec![0.0; geom.dims.len()];
    for _ in 0..iterations {
        apply_normal(&geom, p.data(), &mut ap);
        let pd = p.data_mut();
        for i in 0..pd.len() {
            if diag[i] > 0.0 {
                pd[i] += OMEGA * (rhs.data()[i] - ap[i]) / diag[i];
            }
        }
    }
    let mut out = u.clone();
    out.add_scaled(&VectorGrid::divergence_adjoint(&p), -1.0);
    Ok((out, p))
}

/// Root mean square of the discrete divergence.
pub fn rms_divergence(u: &VectorGrid) -> f64 {
    let div = u.divergence();
    (div.dot(&div) / div.data().len() as f64).sqrt()
}

/// Simulator state between steps.
#[derive(Clone, Debug)]
pub struct PlumeState {
    pub density: ScalarGrid,
    pub velocity: VectorGrid,
    pub pressure: ScalarGrid,
    pub step: usize,
}

impl PlumeState {
    pub fn empty(geom: GridGeom) -> Self {
        Self {
            density: ScalarGrid::zeros(geom),
            velocity: VectorGrid::zeros(geom),
            pressure: ScalarGrid::zeros(geom),
            step: 0,
        }
    }
}

/// One operator-split step. Returns the new state and the divergence-free
/// velocity that transported the density.
pub fn step(state: &PlumeState, scenario: &PlumeScenario) -> Result<PlumeState> {
    step_with_source(state, scenario, &inflow_source(scenario, state.density.geom(), state.step))
}

pub fn step_with_source(state: &PlumeState, scenario: &PlumeScenario, source: &ScalarGrid) -> Result<PlumeState> {
    let scheme = AdvectionScheme::MacCormackClamped;
    let mut u = advect_vector(&state.velocity, &state.velocity, scheme)?;
    for (v, r) in u.data_mut().iter_mut().zip(state.density.data()) {
        v.y += scenario.buoyancy * r;
    }
    let (u, pressure) = project(&u, scenario.jacobi_iterations, Some(&state.pressure))?;
    let mut density = advect(&state.density, &u, scheme)?;
    density.add_scaled(source, 1.0);
    density.clamp_min(0.0);
    Ok(PlumeState {
        density,
        velocity: u,
        pressure,
        step: state.step + 1,
    })
}

/// Recorded ground truth: `velocity[t]` carries `density[t]` to
/// `density[t + 1]` before `inflow[t]` is added.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub density: Vec<ScalarGrid>,
    pub velocity: Vec<VectorGrid>,
    pub inflow: Vec<ScalarGrid>,
}

pub fn simulate(scenario: &PlumeScenario) -> Result<GroundTruth> {
    scenario.validate()?;
    let geom = scenario.geom();
    let mut state = PlumeState::empty(geom);
    for _ in 0..scenario.warmup {
        state = step(&state, scenario)?;
    }
    let mut gt = GroundTruth {
        density: Vec::with_capacity(scenario.frames),
        velocity: Vec::with_capacity(scenario.frames),
        inflow: Vec::with_capacity(scenario.frames),
    };
    for _ in 0..scenario.frames {
        let source = inflow_source(scenario, &geom, state.step);
        let next = step_with_source(&state, scenario, &source)?;
        gt.density.push(state.density);
        gt.velocity.push(next.velocity.clone());
        gt.inflow.push(source);
        state = next;
    }
    Ok(gt)
}

/// Cameras evenly spaced on a horizontal arc centered on azimuth 0.
#[allow(clippy::too_many_arguments)]
pub fn arc_cameras(
    target: Vec3,
    distance: f64,
    arc_deg: f64,
    views: usize,
    elevation_deg: f64,
    fov_y: f64,
    width: usize,
    height: usize,
) -> Vec<Camera> {
    (0..views)
        .map(|i| {
            let az = if views == 1 {
                0.0
            } else {
                -0.5 * arc_deg + arc_deg * i as f64 / (views - 1) as f64
            };
            Camera::orbit(target, distance, az, elevation_deg, fov_y, width, height)
        })
        .collect()
}

/// Camera and light placement of a synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Rig {
    pub views: usize,
    pub arc_deg: f64,
    pub elevation_deg: f64,
    pub distance: f64,
    pub fov_y: f64,
    pub resolution: usize,
    pub lights: LightConfig,
}

impl Default for Rig {
    fn default() -> Self {
        Self {
            views: 5,
            arc_deg: 120.0,
            elevation_deg: 10.0,
            distance: 2.4,
            fov_y: 30.0,
            resolution: 32,
            lights: LightConfig::single(Vec3::new(1.3, 2.4, 1.6)),
        }
    }
}

impl Rig {
    /// The rig's cameras around the center of `geom`.
    pub fn cameras(&self, geom: &GridGeom) -> Vec<Camera> {
        arc_cameras(
            geom.center(),
            self.distance,
            self.arc_deg,
            self.views,
            self.elevation_deg,
            self.fov_y,
            self.resolution,
            self.resolution,
        )
    }

    /// A camera of the rig at an arbitrary azimuth.
    pub fn camera_at(&self, geom: &GridGeom, azimuth_deg: f64) -> Camera {
        Camera::orbit(
            geom.center(),
            self.distance,
            azimuth_deg,
            self.elevation_deg,
            self.fov_y,
            self.resolution,
            self.resolution,
        )
    }
}

/// Target images with their calibration, optionally with ground truth.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub geom: GridGeom,
    pub cameras: Vec<Camera>,
    pub lights: LightConfig,
    pub background: Background,
    /// `targets[t][c]`.
    pub targets: Vec<Vec<Image>>,
    pub ground_truth: Option<GroundTruth>,
    pub extra: KeyValues,
}

pub const MANIFEST: &str = "manifest";

fn target_path(t: usize, c: usize) -> String {
    format!("targets/frame_{t:04}_view_{c:02}.pfm")
}

impl SceneBundle {
    pub fn frames(&self) -> usize {
        self.targets.len()
    }

    pub fn views(&self) -> Vec<View> {
        self.cameras
            .iter()
            .map(|c| View::new(c.clone(), self.background.clone()))
            .collect()
    }

    pub fn target_count(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut kv = self.extra.clone();
        let d = self.geom.dims;
        kv.set("format", "gtflow-scene 1");
        kv.set("frames", self.frames());
        kv.set("views", self.cameras.len());
        kv.set("dims", format!("{} {} {}", d.nx, d.ny, d.nz));
        kv.set("origin", format_vec3(self.geom.origin));
        kv.set("cell_size", self.geom.cell_size);
        match &self.background {
            Background::Constant(c) => kv.set(
                "background",
                c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            ),
            Background::Image(img) => {
                io::write_pfm(&dir.join("background.pfm"), img)?;
                kv.set("background", "background.pfm");
            }
        }
        kv.set("lights", "lights.txt");
        self.lights.to_key_values().write(&dir.join("lights.txt"))?;
        for (c, cam) in self.cameras.iter().enumerate() {
            let rel = format!("cameras/view_{c:02}.cam");
            cam.write(&dir.join(&rel))?;
            kv.set(&format!("camera.{c:02}"), rel);
        }
        for (t, frame) in self.targets.iter().enumerate() {
            for (c, img) in frame.iter().enumerate() {
                let rel = target_path(t, c);
                io::write_pfm(&dir.join(&rel), img)?;
                kv.set(&format!("target.{t:04}.{c:02}"), rel);
            }
        }
        if let Some(gt) = &self.ground_truth {
            for t in 0..gt.density.len() {
                let names = [
                    format!("gt/density_{t:04}.gtvf"),
                    format!("gt/velocity_{t:04}.gtvf"),
                    format!("gt/inflow_{t:04}.gtvf"),
                ];
                io::write_scalar(&dir.join(&names[0]), &gt.density[t])?;
                io::write_vector(&dir.join(&names[1]), &gt.velocity[t])?;
                io::write_scalar(&dir.join(&names[2]), &gt.inflow[t])?;
                kv.set(&format!("gt_density.{t:04}"), &names[0]);
                kv.set(&format!("gt_velocity.{t:04}"), &names[1]);
                kv.set(&format!("gt_inflow.{t:04}"), &names[2]);
            }
        }
        kv.write(&dir.join(MANIFEST))
    }

    pub fn read(dir: &Path) -> Result<SceneBundle> {
        let manifest = dir.join(MANIFEST);
        let kv = KeyValues::read(&manifest)?;
        let frames: usize = kv.parse_value("frames", &manifest)?;
        let views: usize = kv.parse_value("views", &manifest)?;
        let dims = parse_dims(kv.require("dims", &manifest)?).ok_or_else(|| Error::format(&manifest, "bad dims"))?;
        let origin = kv.parse_vec3("origin", &manifest)?;
        let cell_size: f64 = kv.parse_value("cell_size", &manifest)?;
        let geom = GridGeom::new(dims, origin, cell_size);
        let bg = kv.require("background", &manifest)?;
        let background = if bg.ends_with(".pfm") {
            Background::Image(io::read_pfm(&dir.join(bg))?)
        } else {
            let vals: std::result::Result<Vec<f64>, _> = bg.split_whitespace().map(str::parse).collect();
            match vals {
                Ok(v) if !v.is_empty() => Background::Constant(v),
                _ => return Err(Error::format(&manifest, format!("bad background '{bg}'"))),
            }
        };
        let lights_path = dir.join(kv.require("lights", &manifest)?);
        let lights = LightConfig::from_key_values(&KeyValues::read(&lights_path)?, &lights_path)?;
        let rel = |key: String| -> Result<PathBuf> { Ok(dir.join(kv.require(&key, &manifest)?)) };
        let cameras = (0..views)
            .map(|c| Camera::read(&rel(format!("camera.{c:02}"))?))
            .collect::<Result<Vec<_>>>()?;
        let targets = (0..frames)
            .map(|t| {
                (0..views)
                    .map(|c| io::read_pfm(&rel(format!("target.{t:04}.{c:02}"))?))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let ground_truth = if kv.get("gt_density.0000").is_some() {
            let mut gt = GroundTruth {
                density: Vec::new(),
                velocity: Vec::new(),
                inflow: Vec::new(),
            };
            for t in 0..frames {
                gt.density.push(io::read_scalar(&rel(format!("gt_density.{t:04}"))?)?);
                gt.velocity.push(io::read_vector(&rel(format!("gt_velocity.{t:04}"))?)?);
                gt.inflow.push(io::read_scalar(&rel(format!("gt_inflow.{t:04}"))?)?);
            }
            Some(gt)
        } else {
            None
        };
        let mut extra = KeyValues::new();
        for (k, v) in kv.iter().filter(|(k, _)| k.starts_with("scenario.")) {
            extra.set(k, v);
        }
        Ok(SceneBundle {
            geom,
            cameras,
            lights,
            background,
            targets,
            ground_truth,
            extra,
        })
    }
}

pub fn parse_dims(s: &str) -> Option<Dims> {
    let v: Vec<usize> = s.split_whitespace().map(|x| x.parse().ok()).collect::<Option<_>>()?;
    match v[..] {
        [n] if n > 0 => Some(Dims::cube(n)),
        [x, y, z] if x > 0 && y > 0 && z > 0 => Some(Dims::new(x, y, z)),
        _ => None,
    }
}

/// Simulates the scenario and renders every frame from every rig camera.
pub fn build_scene(scenario: &PlumeScenario, rig: &Rig, settings: &RenderSettings) -> Result<SceneBundle> {
    let gt = simulate(scenario)?;
    let geom = scenario.geom();
    let cameras = rig.cameras(&geom);
    let background = settings.background.clone();
    let views: Vec<View> = cameras.iter().map(|c| View::new(c.clone(), background.clone())).collect();
    let targets = gt
        .density
        .iter()
        .map(|rho| render_views(rho, &rig.lights, &views, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneBundle {
        geom,
        cameras,
        lights: rig.lights.clone(),
        background,
        targets,
        ground_truth: Some(gt),
        extra: scenario.to_key_values(),
    })
}

/// [`build_scene`] followed by writing the bundle to `out_dir`.
pub fn generate_scene(scenario: &PlumeScenario, rig: &Rig, settings: &RenderSettings, out_dir: &Path) -> Result<SceneBundle> {
    let bundle = build_scene(scenario, rig, settings)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    bundle.write(out_dir)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PlumeScenario {
        PlumeScenario {
            dims: Dims::cube(12),
            frames: 3,
            warmup: 2,
            jacobi_iterations: 50,
            ..PlumeScenario::default()
        }
    }

    #[test]
    fn zero_state_without_inflow_is_a_fixed_point() {
        let sc = PlumeScenario {
            inflow_rate: 0.0,
            ..small()
        };
        let s = PlumeState::empty(sc.geom());
        let n = step(&s, &sc).unwrap();
        assert!(n.density.data().iter().all(|&v| v == 0.0));
        assert!(n.velocity.data().iter().all(|v| *v == Vec3::ZERO));
    }

    #[test]
    fn still_fluid_gains_exactly_the_inflow() {
        let sc = PlumeScenario {
            buoyancy: 0.0,
            ..small()
        };
        let geom = sc.geom();
        let mut s = PlumeState::empty(geom);
        s.density = ScalarGrid::from_fn(geom, |p| 0.3 + p.x);
        let src = inflow_source(&sc, &geom, 0);
        let n = step_with_source(&s, &sc, &src).unwrap();
        let gained = n.density.sum() - s.density.sum();
        assert!(src.sum() > 0.0);
        assert!((gained - src.sum()).abs() <= 1e-6 * src.sum());
    }

    #[test]
    fn line_operator_matches_grid_operators() {
        let geom = GridGeom::fitted(Dims::new(5, 4, 3), Vec3::ZERO, 1.0);
        let p = ScalarGrid::from_fn(geom, |q| (4.0 * q.x).sin() + q.y * q.z);
        let expected = VectorGrid::divergence_adjoint(&p).divergence();
        let mut out = vec![0.0; geom.dims.len()];
        apply_normal(&geom, p.data(), &mut out);
        for (a, b) in out.iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn projection_is_nearly_idempotent() {
        let geom = GridGeom::fitted(Dims::cube(16), Vec3::ZERO, 1.0);
        let u = VectorGrid::from_fn(geom, |p| Vec3::new((3.0 * p.y).sin(), p.x * p.x, (2.0 * p.x + p.z).cos()) * 0.05);
        let (once, _) = project(&u, 200, None).unwrap();
        let (twice, _) = project(&once, 200, None).unwrap();
        let rms = |a: &VectorGrid, b: &VectorGrid| {
            let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (*x - *y).dot(*x - *y)).sum();
            (s / a.data().len() as f64).sqrt()
        };
        assert!(rms(&once, &twice) < 0.01 * rms(&u, &once));
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        for (x, y) in a.density.iter().zip(&b.density) {
            assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn arc_is_symmetric() {
        let cams = arc_cameras(Vec3::ZERO, 2.0, 120.0, 5, 0.0, 40.0, 8, 8);
        assert!((cams[0].position.x + cams[4].position.x).abs() < 1e-12);
        assert!((cams[2].position.x).abs() < 1e-12);
        assert_eq!(arc_cameras(Vec3::ZERO, 2.0, 120.0, 1, 0.0, 40.0, 8, 8)[0].position.z, 2.0);
    }
}
