use std::fs;
use std::path::Path;

use crate::advect::{advect, AdvectionScheme};
use crate::error::{Error, Result};
use crate::grid::{Dims, ScalarGrid, VectorGrid};
use crate::io::{read_scalar, read_vector, write_scalar, write_vector, KeyValues};
use crate::metrics::compose_inflow;

use super::scene::hull_indicator;
use super::Variant;

pub const DEFAULT_INFLOW_OVERLAP: usize = 4;

/// Unknowns of a reconstruction and the density sequence they imply.
///
/// In global mode `density` is derived: `density[0] = rho0` and every later
/// frame is `hull ⊙ A(max(ρ + inflow, 0), u)` of its predecessor. Otherwise
/// every frame of `density` is a free unknown and `rho0` mirrors frame 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub rho0: ScalarGrid,
    pub inflow: Vec<ScalarGrid>,
    pub inflow_mask: ScalarGrid,
    pub velocity: Vec<VectorGrid>,
    /// Binary hull per frame at the current resolution.
    pub hull: Vec<ScalarGrid>,
    pub density: Vec<ScalarGrid>,
    pub global: bool,
    pub variant: Variant,
    pub iteration: usize,
    pub scale: usize,
    pub seed: u64,
}

impl ReconState {
    /// Per-frame densities without transport; velocities and inflow zero.
    pub fn from_densities(density: Vec<ScalarGrid>, hull: Vec<ScalarGrid>, variant: Variant, seed: u64) -> Result<Self> {
        if density.is_empty() || density.len() != hull.len() {
            return Err(Error::ShapeMismatch("one hull per density frame".into()));
        }
        let geom = *density[0].geom();
        if density.iter().chain(&hull).any(|g| *g.geom() != geom) {
            return Err(Error::ShapeMismatch("state frames on different grids".into()));
        }
        let f = density.len();
        Ok(Self {
            rho0: density[0].clone(),
            inflow: vec![ScalarGrid::zeros(geom); f],
            inflow_mask: ScalarGrid::zeros(geom),
            velocity: vec![VectorGrid::zeros(geom); f],
            hull,
            density,
            global: false,
            variant,
            iteration: 0,
            scale: 0,
            seed,
        })
    }

    pub fn frames(&self) -> usize {
        self.density.len()
    }

    pub fn dims(&self) -> Dims {
        self.rho0.dims()
    }

    /// `max(ρᵗ + inflowᵗ, 0)` in global mode, `ρᵗ` otherwise.
    pub fn composed(&self, t: usize) -> Result<ScalarGrid> {
        compose_inflow(&self.density[t], self.global.then(|| &self.inflow[t]))
    }

    /// Re-derives every frame from `rho0`, inflow and velocities.
    pub fn rebuild(&mut self, scheme: AdvectionScheme) -> Result<()> {
        self.density[0] = self.rho0.clone();
        for t in 1..self.frames() {
            let src = compose_inflow(&self.density[t - 1], Some(&self.inflow[t - 1]))?;
            let mut next = advect(&src, &self.velocity[t - 1], scheme)?;
            next.mul_assign(&self.hull[t]);
            self.density[t] = next;
        }
        Ok(())
    }

    /// Zero outside the hull and non-negative inside; inflow restricted to
    /// its mask with `ρ + inflow >= 0`.
    pub fn constrain(&mut self) {
        constrain_density(&mut self.rho0, &self.hull[0]);
        if self.global {
            self.density[0] = self.rho0.clone();
        } else {
            for (d, h) in self.density.iter_mut().zip(&self.hull) {
                constrain_density(d, h);
            }
            self.rho0 = self.density[0].clone();
        }
        for (i, d) in self.inflow.iter_mut().zip(&self.density) {
            constrain_inflow(i, &self.inflow_mask, d);
        }
    }

    /// Resamples every unknown onto `dims` and installs the matching hulls.
    pub fn resize(&mut self, dims: Dims, hull: Vec<ScalarGrid>, scheme: AdvectionScheme) -> Result<()> {
        if hull.len() != self.frames() || hull.iter().any(|h| h.dims() != dims) {
            return Err(Error::ShapeMismatch("resize needs one hull per frame at the new resolution".into()));
        }
        self.rho0 = self.rho0.resample(dims);
        self.inflow = self.inflow.iter().map(|g| g.resample(dims)).collect();
        self.inflow_mask = hull_indicator(&self.inflow_mask.resample(dims));
        self.velocity = self.velocity.iter().map(|u| u.resample(dims)).collect();
        self.density = self.density.iter().map(|g| g.resample(dims)).collect();
        self.hull = hull;
        self.constrain();
        if self.global {
            self.rebuild(scheme)?;
        }
        Ok(())
    }

    /// Writes the checkpoint layout into `dir`; `extra` lands in `meta`.
    pub fn write(&self, dir: &Path, extra: &KeyValues) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_scalar(&dir.join("rho0.gtvf"), &self.rho0)?;
        write_scalar(&dir.join("inflow_mask.gtvf"), &self.inflow_mask)?;
        for t in 0..self.frames() {
            write_vector(&dir.join(format!("frame_{t:04}.u.gtvf")), &self.velocity[t])?;
            write_scalar(&dir.join(format!("inflow_{t:04}.gtvf")), &self.inflow[t])?;
            write_scalar(&dir.join(format!("hull_{t:04}.gtvf")), &self.hull[t])?;
            write_scalar(&dir.join(format!("density_{t:04}.gtvf")), &self.density[t])?;
        }
        let mut meta = extra.clone();
        meta.set("iteration", self.iteration);
        meta.set("scale", self.scale);
        meta.set("seed", self.seed);
        meta.set("variant", self.variant);
        meta.set("global", self.global);
        meta.set("frames", self.frames());
        meta.write(&dir.join("meta"))
    }

    /// Reads a checkpoint; global states re-derive their densities so the
    /// stored sequence is consistent with the stored unknowns.
    pub fn read(dir: &Path, scheme: AdvectionScheme) -> Result<Self> {
        let meta_path = dir.join("meta");
        let meta = KeyValues::read(&meta_path)?;
        let frames: usize = meta.parse_value("frames", &meta_path)?;
        if frames == 0 {
            return Err(Error::format(&meta_path, "checkpoint has no frames"));
        }
        let mut state = Self {
            rho0: read_scalar(&dir.join("rho0.gtvf"))?,
            inflow_mask: read_scalar(&dir.join("inflow_mask.gtvf"))?,
            inflow: Vec::with_capacity(frames),
            velocity: Vec::with_capacity(frames),
            hull: Vec::with_capacity(frames),
            density: Vec::with_capacity(frames),
            global: meta.parse_value("global", &meta_path)?,
            variant: meta.parse_value("variant", &meta_path)?,
            iteration: meta.parse_value("iteration", &meta_path)?,
            scale: meta.parse_value("scale", &meta_path)?,
            seed: meta.parse_value("seed", &meta_path)?,
        };
        for t in 0..frames {
            state.velocity.push(read_vector(&dir.join(format!("frame_{t:04}.u.gtvf")))?);
            state.inflow.push(read_scalar(&dir.join(format!("inflow_{t:04}.gtvf")))?);
            state.hull.push(read_scalar(&dir.join(format!("hull_{t:04}.gtvf")))?);
            state.density.push(read_scalar(&dir.join(format!("density_{t:04}.gtvf")))?);
        }
        let geom = *state.rho0.geom();
        let same = state.inflow_mask.geom() == &geom
            && state.velocity.iter().all(|u| *u.geom() == geom)
            && state.inflow.iter().chain(&state.hull).chain(&state.density).all(|g| *g.geom() == geom);
        if !same {
            return Err(Error::format(dir, "checkpoint grids disagree in geometry"));
        }
        if state.global {
            state.rebuild(scheme)?;
        }
        Ok(state)
    }
}

pub(crate) fn constrain_density(d: &mut ScalarGrid, hull: &ScalarGrid) {
    for (v, h) in d.data_mut().iter_mut().zip(hull.data()) {
        *v = if *h > 0.5 { v.max(0.0) } else { 0.0 };
    }
}

fn constrain_inflow(inflow: &mut ScalarGrid, mask: &ScalarGrid, density: &ScalarGrid) {
    let it = inflow.data_mut().iter_mut().zip(mask.data()).zip(density.data());
    for ((i, m), d) in it {
        *i = if *m > 0.5 { i.max(-d) } else { 0.0 };
    }
}

/// Inflow cells: the lowest `overlap` occupied rows of the union hull plus
/// one row below, restricted to the footprint of those rows.
pub fn place_inflow(hulls: &[ScalarGrid], overlap: usize) -> Result<ScalarGrid> {
    let first = hulls
        .first()
        .ok_or_else(|| Error::InvalidInput("inflow placement needs at least one hull".into()))?;
    let d = first.dims();
    let mut union = vec![false; d.len()];
    for h in hulls {
        if h.dims() != d {
            return Err(Error::ShapeMismatch("hulls on different grids".into()));
        }
        for (u, v) in union.iter_mut().zip(h.data()) {
            *u |= *v > 0.5;
        }
    }
    let y_min = (0..d.ny)
        .find(|&j| (0..d.nz).any(|k| (0..d.nx).any(|i| union[d.index(i, j, k)])))
        .ok_or_else(|| Error::InvalidInput("hull is empty; no inflow region".into()))?;
    let top = (y_min + overlap.max(1)).min(d.ny);
    let mut mask = ScalarGrid::zeros(*first.geom());
    for k in 0..d.nz {
        for i in 0..d.nx {
            if (y_min..top).any(|j| union[d.index(i, j, k)]) {
                for j in y_min.saturating_sub(1)..top {
                    mask.set(i, j, k, 1.0);
                }
            }
        }
    }
    Ok(mask)
}
