use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, Stencil};
use crate::io::{format_vec3, KeyValues};
use crate::math::Vec3;

use super::RenderSettings;

pub const DEFAULT_POINT_INTENSITY: f64 = 0.85;
pub const DEFAULT_AMBIENT: f64 = 0.64;

#[derive(Clone, Debug, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    pub intensity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LightConfig {
    pub points: Vec<PointLight>,
    pub ambient: f64,
}

impl LightConfig {
    pub fn ambient_only(ambient: f64) -> Self {
        Self {
            points: Vec::new(),
            ambient,
        }
    }

    /// One point light at `position` with the default intensities.
    pub fn single(position: Vec3) -> Self {
        Self {
            points: vec![PointLight {
                position,
                intensity: DEFAULT_POINT_INTENSITY,
            }],
            ambient: DEFAULT_AMBIENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |v: f64| !(v.is_finite() && v >= 0.0);
        if bad(self.ambient) || self.points.iter().any(|p| bad(p.intensity) || !p.position.is_finite()) {
            return Err(Error::InvalidInput("light intensities must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("ambient", self.ambient);
        kv.set("point_lights", self.points.len());
        for (n, p) in self.points.iter().enumerate() {
            kv.set(&format!("light{n}_position"), format_vec3(p.position));
            kv.set(&format!("light{n}_intensity"), p.intensity);
        }
        kv
    }

    pub fn from_key_values(kv: &KeyValues, path: &Path) -> Result<Self> {
        let count: usize = kv.parse_value("point_lights", path)?;
        let points = (0..count)
            .map(|n| {
                Ok(PointLight {
                    position: kv.parse_vec3(&format!("light{n}_position"), path)?,
                    intensity: kv.parse_value(&format!("light{n}_intensity"), path)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lights = Self {
            points,
            ambient: kv.parse_value("ambient", path)?,
        };
        lights.validate()?;
        Ok(lights)
    }
}

/// Emitted light grid together with the per-light transmittance it was built
/// from.
#[derive(Clone, Debug)]
pub struct LightField {
    pub emission: ScalarGrid,
    transmittance: Vec<ScalarGrid>,
    falloff: Vec<Vec<f64>>,
}

fn check_density(rho: &ScalarGrid) -> Result<()> {
    if let Some(v) = rho.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!("density must be finite and >= 0, found {v}")));
    }
    Ok(())
}

/// Slice sweep from a point light through the density grid along the axis
/// that points most directly at the light.
struct ShadowSweep {
    axis: usize,
    /// Slice indices ordered from the light outwards.
    order: Vec<usize>,
    light: Vec3,
    substeps: usize,
    cell_size: f64,
}

impl ShadowSweep {
    fn new(rho: &ScalarGrid, light: Vec3, settings: &RenderSettings) -> Result<Self> {
        let geom = rho.geom();
        let dims = rho.dims().as_array();
        let gl = geom.to_index_space(light);
        let gc = geom.to_index_space(geom.center());
        let d = gl - gc;
        let axis = (0..3)
            .max_by(|&a, &b| d[a].abs().partial_cmp(&d[b].abs()).unwrap())
            .unwrap_or(1);
        let n = dims[axis];
        let order: Vec<usize> = if gl[axis] > n as f64 - 0.5 {
            (0..n).rev().collect()
        } else if gl[axis] < -0.5 {
            (0..n).collect()
        } else {
            return Err(Error::InvalidInput(format!(
                "point light at {light:?} lies inside the volume span along its dominant axis"
            )));
        };
        let substeps = (1.0 / settings.shadow_step_size).ceil().max(1.0) as usize;
        Ok(Self {
            axis,
            order,
            light: gl,
            substeps,
            cell_size: geom.cell_size,
        })
    }

    fn slice_cells(&self, dims: [usize; 3], slice: usize) -> Vec<[usize; 3]> {
        let (b, c) = match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut cells = Vec::with_capacity(dims[b] * dims[c]);
        for j in 0..dims[c] {
            for i in 0..dims[b] {
                let mut p = [0usize; 3];
                p[self.axis] = slice;
                p[b] = i;
                p[c] = j;
                cells.push(p);
            }
        }
        cells
    }

    /// Index-space step towards the light that lands on the neighbouring
    /// slice, and its world-space length.
    fn step(&self, cell: [usize; 3]) -> (Vec3, f64) {
        let c = Vec3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64);
        let d = self.light - c;
        let step = d * (1.0 / d[self.axis].abs());
        (step, step.norm() * self.cell_size)
    }

    /// Optical depth from the light to every cell center.
    fn optical_depth(&self, rho: &ScalarGrid) -> ScalarGrid {
        let dims = rho.dims();
        let data = rho.data();
        let mut tau = ScalarGrid::zeros(*rho.geom());
        for (n, &slice) in self.order.iter().enumerate() {
            let cells = self.slice_cells(dims.as_array(), slice);
            let values: Vec<f64> = {
                let tau_data = tau.data();
                cells
                    .par_iter()
                    .map(|&cell| {
                        let idx = dims.index(cell[0], cell[1], cell[2]);
                        let (step, len) = self.step(cell);
                        if n == 0 {
                            return 0.5 * len * data[idx];
                        }
                        let c = Vec3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64);
                        let q = Stencil::at(dims, c + step);
                        let k = self.substeps;
                        let dl = len / k as f64;
                        let mut acc = 0.5 * dl * (data[idx] + q.apply(data));
                        for m in 1..k {
                            let p = Stencil::at(dims, c + step * (m as f64 / k as f64));
                            acc += dl * p.apply(data);
                        }
                        q.apply(tau_data) + acc
                    })
                    .collect()
            };
            for (cell, v) in cells.iter().zip(values) {
                tau.set(cell[0], cell[1], cell[2], v);
            }
        }
        tau
    }

    /// Adjoint of [`ShadowSweep::optical_depth`]; consumes `grad_tau` and adds
    /// into `grad_rho`.
    fn optical_depth_vjp(&self, dims: crate::grid::Dims, mut grad_tau: Vec<f64>, grad_rho: &mut [f64]) {
        for (n, &slice) in self.order.iter().enumerate().rev() {
            for cell in self.slice_cells(dims.as_array(), slice) {
                let idx = dims.index(cell[0], cell[1], cell[2]);
                let g = grad_tau[idx];
                if g == 0.0 {
                    continue;
                }
                let (step, len) = self.step(cell);
                if n == 0 {
                    grad_rho[idx] += 0.5 * len * g;
                    continue;
                }
                let c = Vec3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64);
                let q = Stencil::at(dims, c + step);
                let k = self.substeps;
                let dl = len / k as f64;
                grad_rho[idx] += 0.5 * dl * g;
                q.scatter(0.5 * dl * g, grad_rho);
                for m in 1..k {
                    Stencil::at(dims, c + step * (m as f64 / k as f64)).scatter(dl * g, grad_rho);
                }
                q.scatter(g, &mut grad_tau);
            }
        }
    }
}

/// Emitted light `L = ρ (i_a + Σ_p i_p T_p / (1 + |x_p - x|))`.
pub fn light_field(rho: &ScalarGrid, lights: &LightConfig, settings: &RenderSettings) -> Result<LightField> {
    lights.validate()?;
    settings.validate()?;
    check_density(rho)?;
    let geom = *rho.geom();
    let dims = rho.dims();
    let mut shade = vec![lights.ambient; dims.len()];
    let mut transmittance = Vec::with_capacity(lights.points.len());
    let mut falloff = Vec::with_capacity(lights.points.len());
    for p in &lights.points {
        let f: Vec<f64> = (0..dims.len())
            .map(|idx| {
                let (i, j, k) = dims.coords(idx);
                1.0 / (1.0 + (p.position - geom.cell_center(i, j, k)).norm())
            })
            .collect();
        let t = if p.intensity == 0.0 {
            ScalarGrid::filled(geom, 1.0)
        } else {
            ShadowSweep::new(rho, p.position, settings)?
                .optical_depth(rho)
                .map(|tau| (-tau).exp())
        };
        for (s, (fv, tv)) in shade.iter_mut().zip(f.iter().zip(t.data())) {
            *s += p.intensity * fv * tv;
        }
        transmittance.push(t);
        falloff.push(f);
    }
    let emission = ScalarGrid::from_data(geom, rho.data().iter().zip(&shade).map(|(r, s)| r * s).collect())?;
    Ok(LightField {
        emission,
        transmittance,
        falloff,
    })
}

pub fn light_grid(rho: &ScalarGrid, lights: &LightConfig, settings: &RenderSettings) -> Result<ScalarGrid> {
    Ok(light_field(rho, lights, settings)?.emission)
}

impl LightField {
    /// Gradient with respect to the density given the gradient on the emitted
    /// light, including the shadow-volume dependency.
    pub fn vjp(
        &self,
        rho: &ScalarGrid,
        lights: &LightConfig,
        settings: &RenderSettings,
        grad_emission: &ScalarGrid,
    ) -> Result<ScalarGrid> {
        crate::error::ensure_same(rho.dims(), grad_emission.dims(), "light gradient")?;
        let dims = rho.dims();
        let gl = grad_emission.data();
        let r = rho.data();
        let mut grad = vec![0.0; dims.len()];
        for idx in 0..dims.len() {
            let mut shade = lights.ambient;
            for (n, p) in lights.points.iter().enumerate() {
                shade += p.intensity * self.falloff[n][idx] * self.transmittance[n].data()[idx];
            }
            grad[idx] = gl[idx] * shade;
        }
        for (n, p) in lights.points.iter().enumerate() {
            if p.intensity == 0.0 {
                continue;
            }
            let t = self.transmittance[n].data();
            let f = &self.falloff[n];
            let grad_tau: Vec<f64> = (0..dims.len())
                .map(|idx| -gl[idx] * r[idx] * p.intensity * f[idx] * t[idx])
                .collect();
            ShadowSweep::new(rho, p.position, settings)?.optical_depth_vjp(dims, grad_tau, &mut grad);
        }
        ScalarGrid::from_data(*rho.geom(), grad)
    }

    pub fn transmittance(&self, light: usize) -> &ScalarGrid {
        &self.transmittance[light]
    }
}
