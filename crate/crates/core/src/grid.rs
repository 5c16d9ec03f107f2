//! Dense cell-centered scalar and vector fields.
//!
//! Storage is x-fastest, then y, then z. Cell `(i, j, k)` has its center at
//! `origin + (i, j, k) * cell_size`. Velocities are world-space displacements
//! per frame.

use rayon::prelude::*;

use crate::error::{ensure_same, Error, Result};
use crate::math::{lerp, stable_mean, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn max_axis(&self) -> usize {
        self.nx.max(self.ny).max(self.nz)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    /// Scales every axis by `factor`, rounding and keeping at least one cell.
    pub fn scaled(&self, factor: f64) -> Dims {
        let s = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        Dims::new(s(self.nx), s(self.ny), s(self.nz))
    }
}

/// Placement of a grid in world space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeom {
    pub dims: Dims,
    pub origin: Vec3,
    pub cell_size: f64,
}

impl GridGeom {
    pub fn new(dims: Dims, origin: Vec3, cell_size: f64) -> Self {
        Self {
            dims,
            origin,
            cell_size,
        }
    }

    /// Grid of `dims` cells fitted into the axis-aligned box with lower corner
    /// `lo`, using the largest axis to set the cell size.
    pub fn fitted(dims: Dims, lo: Vec3, extent: f64) -> Self {
        let h = extent / dims.max_axis() as f64;
        Self::new(dims, lo + Vec3::splat(0.5 * h), h)
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.cell_size
    }

    #[inline]
    pub fn to_index_space(&self, p: Vec3) -> Vec3 {
        (p - self.origin) * (1.0 / self.cell_size)
    }

    /// Lower and upper corners of the volume covered by the cells.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let half = Vec3::splat(0.5 * self.cell_size);
        let d = self.dims;
        let hi = self.cell_center(d.nx - 1, d.ny - 1, d.nz - 1);
        (self.origin - half, hi + half)
    }

    pub fn center(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        (lo + hi) * 0.5
    }

    /// Same physical center, `dims` cells, cell size chosen so the largest
    /// axis keeps its extent.
    pub fn resized(&self, dims: Dims) -> GridGeom {
        let extent = self.dims.max_axis() as f64 * self.cell_size;
        let h = extent / dims.max_axis() as f64;
        let c = self.center();
        let half = Vec3::new(
            (dims.nx as f64 - 1.0) * 0.5,
            (dims.ny as f64 - 1.0) * 0.5,
            (dims.nz as f64 - 1.0) * 0.5,
        ) * h;
        GridGeom::new(dims, c - half, h)
    }
}

/// Eight-point trilinear stencil. Entry `n` addresses corner
/// `(n & 1, (n >> 1) & 1, n >> 2)` of the interpolation cell.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub idx: [usize; 8],
    pub w: [f64; 8],
    frac: [f64; 3],
    clamped: [bool; 3],
}

#[inline]
fn axis_lookup(g: f64, n: usize) -> (usize, usize, f64, bool) {
    let hi = (n - 1) as f64;
    let clamped = g < 0.0 || g > hi;
    let gc = g.clamp(0.0, hi);
    let i0 = (gc.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, gc - i0 as f64, clamped)
}

impl Stencil {
    pub fn at(dims: Dims, g: Vec3) -> Stencil {
        let (x0, x1, tx, cx) = axis_lookup(g.x, dims.nx);
        let (y0, y1, ty, cy) = axis_lookup(g.y, dims.ny);
        let (z0, z1, tz, cz) = axis_lookup(g.z, dims.nz);
        let xs = [(x0, 1.0 - tx), (x1, tx)];
        let ys = [(y0, 1.0 - ty), (y1, ty)];
        let zs = [(z0, 1.0 - tz), (z1, tz)];
        let mut idx = [0usize; 8];
        let mut w = [0.0; 8];
        let mut n = 0;
        for &(k, wz) in &zs {
            for &(j, wy) in &ys {
                for &(i, wx) in &xs {
                    idx[n] = dims.index(i, j, k);
                    w[n] = wx * wy * wz;
                    n += 1;
                }
            }
        }
        Stencil {
            idx,
            w,
            frac: [tx, ty, tz],
            clamped: [cx, cy, cz],
        }
    }

    pub fn apply(&self, data: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(self.w.iter())
            .map(|(&i, &w)| w * data[i])
            .sum()
    }

    /// Derivative of the interpolant with respect to the index-space position;
    /// zero along axes where the lookup was clamped.
    pub fn apply_grad(&self, data: &[f64]) -> Vec3 {
        let v: [f64; 8] = std::array::from_fn(|n| data[self.idx[n]]);
        let [tx, ty, tz] = self.frac;
        let mut g = Vec3::ZERO;
        if !self.clamped[0] {
            let d = |a: usize| v[a + 1] - v[a];
            g.x = lerp(lerp(d(0), d(2), ty), lerp(d(4), d(6), ty), tz);
        }
        if !self.clamped[1] {
            let d = |a: usize| v[a + 2] - v[a];
            g.y = lerp(lerp(d(0), d(1), tx), lerp(d(4), d(5), tx), tz);
        }
        if !self.clamped[2] {
            let d = |a: usize| v[a + 4] - v[a];
            g.z = lerp(lerp(d(0), d(1), tx), lerp(d(2), d(3), tx), ty);
        }
        g
    }

    pub fn scatter(&self, value: f64, out: &mut [f64]) {
        for n in 0..8 {
            out[self.idx[n]] += self.w[n] * value;
        }
    }

    pub fn min_max(&self, data: &[f64]) -> (f64, f64) {
        self.idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(data[i]), hi.max(data[i]))
        })
    }
}

/// Trilinear interpolation of `data` at index-space position `g`, clamped to
/// the boundary cells.
#[inline]
pub fn interp_index(dims: Dims, data: &[f64], g: Vec3) -> f64 {
    let (x0, x1, tx, _) = axis_lookup(g.x, dims.nx);
    let (y0, y1, ty, _) = axis_lookup(g.y, dims.ny);
    let (z0, z1, tz, _) = axis_lookup(g.z, dims.nz);
    let at = |i, j, k| data[dims.index(i, j, k)];
    let c00 = lerp(at(x0, y0, z0), at(x1, y0, z0), tx);
    let c10 = lerp(at(x0, y1, z0), at(x1, y1, z0), tx);
    let c01 = lerp(at(x0, y0, z1), at(x1, y0, z1), tx);
    let c11 = lerp(at(x0, y1, z1), at(x1, y1, z1), tx);
    lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    geom: GridGeom,
    data: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(geom: GridGeom) -> Self {
        Self::filled(geom, 0.0)
    }

    pub fn filled(geom: GridGeom, value: f64) -> Self {
        Self {
            geom,
            data: vec![value; geom.dims.len()],
        }
    }

    pub fn from_data(geom: GridGeom, data: Vec<f64>) -> Result<Self> {
        ensure_same(data.len(), geom.dims.len(), "scalar grid data length")?;
        Ok(Self { geom, data })
    }

    /// Builds a grid by evaluating `f` at every cell center.
    pub fn from_fn(geom: GridGeom, f: impl Fn(Vec3) -> f64 + Sync) -> Self {
        let d = geom.dims;
        let data = (0..d.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = d.coords(idx);
                f(geom.cell_center(i, j, k))
            })
            .collect();
        Self { geom, data }
    }

    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn dims(&self) -> Dims {
        self.geom.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geom.dims.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.geom.dims.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn sample_index(&self, g: Vec3) -> f64 {
        interp_index(self.geom.dims, &self.data, g)
    }

    /// Trilinear sample at a world position; positions outside the volume are
    /// clamped to the boundary cells.
    pub fn sample(&self, pos: Vec3) -> f64 {
        self.sample_index(self.geom.to_index_space(pos))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarGrid {
        ScalarGrid {
            geom: self.geom,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarGrid, f: impl Fn(f64, f64) -> f64) -> Result<ScalarGrid> {
        ensure_same(self.dims(), other.dims(), "zip_map")?;
        Ok(ScalarGrid {
            geom: self.geom,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_scaled(&mut self, other: &ScalarGrid, s: f64) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn mul_assign(&mut self, other: &ScalarGrid) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    pub fn dot(&self, other: &ScalarGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp_min(&mut self, lo: f64) {
        self.data.iter_mut().for_each(|v| *v = v.max(lo));
    }

    /// Resamples onto `new_dims` cells covering the same physical extent.
    pub fn resample(&self, new_dims: Dims) -> ScalarGrid {
        if new_dims == self.dims() {
            return self.clone();
        }
        let geom = self.geom.resized(new_dims);
        let data = resample_channel(&self.geom, &self.data, &geom);
        ScalarGrid { geom, data }
    }

    /// Resamples onto an explicit target geometry.
    pub fn resample_to(&self, geom: &GridGeom) -> ScalarGrid {
        if *geom == self.geom {
            return self.clone();
        }
        ScalarGrid {
            geom: *geom,
            data: resample_channel(&self.geom, &self.data, geom),
        }
    }

    /// Central-difference gradient, one-sided at the boundaries.
    pub fn spatial_gradient(&self) -> VectorGrid {
        let d = self.dims();
        let h = self.geom.cell_size;
        let gx = diff_axis(d, h, &self.data, 0);
        let gy = diff_axis(d, h, &self.data, 1);
        let gz = diff_axis(d, h, &self.data, 2);
        let data = (0..d.len()).map(|i| Vec3::new(gx[i], gy[i], gz[i])).collect();
        VectorGrid {
            geom: self.geom,
            data,
        }
    }

    /// Separable Gaussian blur with `sigma` in cells; clamped borders.
    pub fn gaussian_blur(&self, sigma: f64) -> ScalarGrid {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let shape = self.dims().as_array();
        let mut data = self.data.clone();
        for axis in 0..3 {
            data = blur_axis(&data, shape, axis, &kernel);
        }
        ScalarGrid {
            geom: self.geom,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorGrid {
    geom: GridGeom,
    data: Vec<Vec3>,
}

impl VectorGrid {
    pub fn zeros(geom: GridGeom) -> Self {
        Self::filled(geom, Vec3::ZERO)
    }

    pub fn filled(geom: GridGeom, v: Vec3) -> Self {
        Self {
            geom,
            data: vec![v; geom.dims.len()],
        }
    }

    pub fn from_data(geom: GridGeom, data: Vec<Vec3>) -> Result<Self> {
        ensure_same(data.len(), geom.dims.len(), "vector grid data length")?;
        Ok(Self { geom, data })
    }

    pub fn from_fn(geom: GridGeom, f: impl Fn(Vec3) -> Vec3 + Sync) -> Self {
        let d = geom.dims;
        let data = (0..d.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = d.coords(idx);
                f(geom.cell_center(i, j, k))
            })
            .collect();
        Self { geom, data }
    }

    pub fn from_components(c: [&ScalarGrid; 3]) -> Result<Self> {
        ensure_same(c[0].dims(), c[1].dims(), "vector components")?;
        ensure_same(c[0].dims(), c[2].dims(), "vector components")?;
        let data = (0..c[0].data.len())
            .map(|i| Vec3::new(c[0].data[i], c[1].data[i], c[2].data[i]))
            .collect();
        Ok(Self {
            geom: c[0].geom,
            data,
        })
    }

    pub fn component(&self, axis: usize) -> ScalarGrid {
        ScalarGrid {
            geom: self.geom,
            data: self.data.iter().map(|v| v[axis]).collect(),
        }
    }

    pub fn components(&self) -> [ScalarGrid; 3] {
        [self.component(0), self.component(1), self.component(2)]
    }

    pub fn geom(&self) -> &GridGeom {
        &self.geom
    }

    pub fn dims(&self) -> Dims {
        self.geom.dims
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.data[self.geom.dims.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Vec3) {
        let idx = self.geom.dims.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn sample_index(&self, g: Vec3) -> Vec3 {
        let d = self.geom.dims;
        let mut out = Vec3::ZERO;
        for axis in 0..3 {
            out[axis] = interp_index_with(d, g, |idx| self.data[idx][axis]);
        }
        out
    }

    pub fn sample(&self, pos: Vec3) -> Vec3 {
        self.sample_index(self.geom.to_index_space(pos))
    }

    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> VectorGrid {
        VectorGrid {
            geom: self.geom,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &VectorGrid, s: f64) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v = *v * s);
    }

    pub fn dot(&self, other: &VectorGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.dot(*b)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat view as `3 * len` scalars, channel fastest.
    pub fn as_flat(&self) -> Vec<f64> {
        self.data.iter().flat_map(|v| v.to_array()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), 3 * self.data.len());
        for (v, c) in self.data.iter_mut().zip(flat.chunks_exact(3)) {
            *v = Vec3::new(c[0], c[1], c[2]);
        }
    }

    pub fn resample(&self, new_dims: Dims) -> VectorGrid {
        if new_dims == self.dims() {
            return self.clone();
        }
        let geom = self.geom.resized(new_dims);
        self.resample_to(&geom)
    }

    pub fn resample_to(&self, geom: &GridGeom) -> VectorGrid {
        if *geom == self.geom {
            return self.clone();
        }
        let c = self.components().map(|s| s.resample_to(geom));
        VectorGrid::from_components([&c[0], &c[1], &c[2]]).expect("same dims")
    }

    /// Divergence in 1/frame: central differences inside, one-sided at the
    /// boundaries.
    pub fn divergence(&self) -> ScalarGrid {
        let d = self.dims();
        let h = self.geom.cell_size;
        let mut out = vec![0.0; d.len()];
        for axis in 0..3 {
            let comp: Vec<f64> = self.data.iter().map(|v| v[axis]).collect();
            let dd = diff_axis(d, h, &comp, axis);
            out.iter_mut().zip(dd).for_each(|(o, v)| *o += v);
        }
        ScalarGrid {
            geom: self.geom,
            data: out,
        }
    }

    /// Adjoint of [`VectorGrid::divergence`]: maps a gradient on the divergence
    /// back onto the velocity components.
    pub fn divergence_adjoint(grad: &ScalarGrid) -> VectorGrid {
        let d = grad.dims();
        let h = grad.geom.cell_size;
        let mut data = vec![Vec3::ZERO; d.len()];
        for axis in 0..3 {
            let mut comp = vec![0.0; d.len()];
            diff_axis_adjoint(d, h, &grad.data, axis, &mut comp);
            data.iter_mut().zip(comp).for_each(|(v, c)| v[axis] = c);
        }
        VectorGrid {
            geom: grad.geom,
            data,
        }
    }
}

#[inline]
fn interp_index_with(dims: Dims, g: Vec3, at: impl Fn(usize) -> f64) -> f64 {
    let (x0, x1, tx, _) = axis_lookup(g.x, dims.nx);
    let (y0, y1, ty, _) = axis_lookup(g.y, dims.ny);
    let (z0, z1, tz, _) = axis_lookup(g.z, dims.nz);
    let v = |i, j, k| at(dims.index(i, j, k));
    let c00 = lerp(v(x0, y0, z0), v(x1, y0, z0), tx);
    let c10 = lerp(v(x0, y1, z0), v(x1, y1, z0), tx);
    let c01 = lerp(v(x0, y0, z1), v(x1, y0, z1), tx);
    let c11 = lerp(v(x0, y1, z1), v(x1, y1, z1), tx);
    lerp(lerp(c00, c10, ty), lerp(c01, c11, ty), tz)
}

fn resample_channel(src: &GridGeom, data: &[f64], dst: &GridGeom) -> Vec<f64> {
    let ratio = dst.cell_size / src.cell_size;
    // Box prefilter when cells grow: average m^3 sub-samples per target cell.
    let m = if ratio > 1.0 + 1e-9 { ratio.ceil() as usize } else { 1 };
    let d = dst.dims;
    let mut offsets = Vec::with_capacity(m * m * m);
    for c in 0..m {
        for b in 0..m {
            for a in 0..m {
                let o = |t: usize| ((t as f64 + 0.5) / m as f64 - 0.5) * dst.cell_size;
                offsets.push(Vec3::new(o(a), o(b), o(c)));
            }
        }
    }
    (0..d.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = d.coords(idx);
            let p = dst.cell_center(i, j, k);
            if m == 1 {
                interp_index(src.dims, data, src.to_index_space(p))
            } else {
                let samples: Vec<f64> = offsets
                    .iter()
                    .map(|&o| interp_index(src.dims, data, src.to_index_space(p + o)))
                    .collect();
                stable_mean(&samples)
            }
        })
        .collect()
}

/// Derivative along `axis`: central differences inside, one-sided at the
/// ends, zero for single-cell axes.
pub(crate) fn diff_axis(d: Dims, h: f64, f: &[f64], axis: usize) -> Vec<f64> {
    let n = d.as_array()[axis];
    let s = d.stride(axis);
    let mut out = vec![0.0; d.len()];
    if n < 2 {
        return out;
    }
    for (idx, o) in out.iter_mut().enumerate() {
        let c = d.coords(idx);
        let a = [c.0, c.1, c.2][axis];
        *o = if a == 0 {
            (f[idx + s] - f[idx]) / h
        } else if a == n - 1 {
            (f[idx] - f[idx - s]) / h
        } else {
            (f[idx + s] - f[idx - s]) / (2.0 * h)
        };
    }
    out
}

pub(crate) fn diff_axis_adjoint(d: Dims, h: f64, g: &[f64], axis: usize, out: &mut [f64]) {
    let n = d.as_array()[axis];
    let s = d.stride(axis);
    if n < 2 {
        return;
    }
    for (idx, &gv) in g.iter().enumerate() {
        let c = d.coords(idx);
        let a = [c.0, c.1, c.2][axis];
        if a == 0 {
            out[idx + s] += gv / h;
            out[idx] -= gv / h;
        } else if a == n - 1 {
            out[idx] += gv / h;
            out[idx - s] -= gv / h;
        } else {
            out[idx + s] += gv / (2.0 * h);
            out[idx - s] -= gv / (2.0 * h);
        }
    }
}

/// Half of a normalized Gaussian kernel; entry 0 is the center tap.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Symmetric 1-D convolution along `axis` of an array shaped `[n0, n1, n2]`
/// (first axis fastest), clamping at the borders. Written as
/// `f_i + sum w (f_j - f_i)` so constant input stays exactly constant.
pub(crate) fn blur_axis(data: &[f64], shape: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let n = shape[axis];
    let stride = match axis {
        0 => 1,
        1 => shape[0],
        _ => shape[0] * shape[1],
    };
    if n < 2 {
        return data.to_vec();
    }
    let r = kernel.len() - 1;
    (0..data.len())
        .map(|idx| {
            let a = (idx / stride) % n;
            let base = idx - a * stride;
            let fc = data[idx];
            let mut acc = 0.0;
            for t in 1..=r {
                let lo = a.saturating_sub(t);
                let hi = (a + t).min(n - 1);
                acc += kernel[t] * ((data[base + lo * stride] - fc) + (data[base + hi * stride] - fc));
            }
            fc + acc
        })
        .collect()
}

/// Element-wise check used before committing optimizer updates.
pub fn check_finite(g: &ScalarGrid, term: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { term: term.into() })
    }
}
