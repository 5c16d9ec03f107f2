//! Scalar objectives with their gradients, and the weights that balance them.
//!
//! All losses are plain sums over pixels or cells, accumulated in index order.

use crate::advect::{advect, advect_vector, advect_vector_vjp, advect_vjp, AdvectionScheme};
use crate::error::{ensure_same, Error, Result};
use crate::grid::{Dims, ScalarGrid, VectorGrid};
use crate::image::Image;
use crate::render::{render_views, render_views_vjp, LightConfig, RenderSettings, View};

/// Shape of a weight schedule over the main-pass progress `p ∈ [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RampKind {
    Linear,
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub kind: RampKind,
}

impl Ramp {
    pub const fn constant(v: f64) -> Self {
        Self {
            start: v,
            end: v,
            kind: RampKind::Linear,
        }
    }

    pub const fn linear(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            kind: RampKind::Linear,
        }
    }

    pub const fn exponential(start: f64, end: f64) -> Self {
        Self {
            start,
            end,
            kind: RampKind::Exponential,
        }
    }

    pub fn value(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        match self.kind {
            RampKind::Exponential if self.start > 0.0 && self.end > 0.0 => {
                self.start * (self.end / self.start).powf(p)
            }
            _ => self.start + (self.end - self.start) * p,
        }
    }

    pub fn scaled(&self, s: f64) -> Ramp {
        Ramp {
            start: self.start * s,
            end: self.end * s,
            kind: self.kind,
        }
    }

    fn is_valid(&self) -> bool {
        self.start.is_finite() && self.end.is_finite() && self.start >= 0.0 && self.end >= 0.0
    }
}

/// Number of cells the default weights were balanced for.
pub const REFERENCE_CELLS: f64 = 128.0 * 128.0 * 128.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub target: f64,
    /// Density warp term of the density update.
    pub warp_dens: Ramp,
    pub disc: f64,
    /// Density warp term of the velocity update.
    pub vel_warp_dens: f64,
    pub warp_vel: Ramp,
    pub div: Ramp,
    /// Scale of the density gradient carried back through the transport chain.
    pub lambda_rho_a: f64,
    /// Scale of the velocity gradient from the transport chain.
    pub lambda_u_a: f64,
    pub beta_ema: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            target: 1.74e-5,
            warp_dens: Ramp::linear(2.7e-10, 5.4e-10),
            disc: 1.5e-5,
            vel_warp_dens: 4.1e-10,
            warp_vel: Ramp::linear(4e-11, 8e-11),
            div: Ramp::exponential(2.6e-9, 1.7e-8),
            lambda_rho_a: 1.0,
            lambda_u_a: 1.0,
            beta_ema: 0.9,
        }
    }
}

/// Weights evaluated at one point of the schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameWeights {
    pub target: f64,
    pub warp_dens: f64,
    pub disc: f64,
    pub vel_warp_dens: f64,
    pub warp_vel: f64,
    pub div: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.target, self.disc, self.vel_warp_dens, self.lambda_rho_a, self.lambda_u_a];
        let ramps = [self.warp_dens, self.warp_vel, self.div];
        if scalars.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || ramps.iter().any(|r| !r.is_valid()) {
            return Err(Error::InvalidInput("loss weights must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.beta_ema) {
            return Err(Error::InvalidInput(format!("beta_ema {} outside [0, 1]", self.beta_ema)));
        }
        Ok(())
    }

    pub fn at(&self, progress: f64) -> FrameWeights {
        FrameWeights {
            target: self.target,
            warp_dens: self.warp_dens.value(progress),
            disc: self.disc,
            vel_warp_dens: self.vel_warp_dens,
            warp_vel: self.warp_vel.value(progress),
            div: self.div.value(progress),
        }
    }

    /// Loss weights multiplied by `REFERENCE_CELLS / cells`, so that summed
    /// losses on a smaller grid produce gradients of comparable size.
    pub fn rescaled(&self, dims: Dims) -> LossWeights {
        let s = REFERENCE_CELLS / dims.len() as f64;
        LossWeights {
            target: self.target * s,
            warp_dens: self.warp_dens.scaled(s),
            disc: self.disc * s,
            vel_warp_dens: self.vel_warp_dens * s,
            warp_vel: self.warp_vel.scaled(s),
            div: self.div.scaled(s),
            ..*self
        }
    }
}

/// Target loss value, density gradient, and the renderings it compared.
#[derive(Clone, Debug)]
pub struct TargetLoss {
    pub value: f64,
    pub grad: ScalarGrid,
    pub renders: Vec<Image>,
}

fn sum_sq_diff(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/|C|) Σ_c |I_c - render_c(ρ)|²` and its gradient.
pub fn target_loss(
    rho: &ScalarGrid,
    lights: &LightConfig,
    views: &[View],
    targets: &[Image],
    settings: &RenderSettings,
) -> Result<TargetLoss> {
    ensure_same(views.len(), targets.len(), "views and targets")?;
    if views.is_empty() {
        return Err(Error::InvalidInput("target loss needs at least one view".into()));
    }
    let renders = render_views(rho, lights, views, settings)?;
    let inv = 1.0 / views.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(views.len());
    for (r, t) in renders.iter().zip(targets) {
        ensure_same(r.shape(), t.shape(), "render vs target image")?;
        value += inv * sum_sq_diff(r, t);
        grads.push(r.sub(t)?.map(|d| 2.0 * inv * d));
    }
    let grad = render_views_vjp(rho, lights, views, settings, &grads)?;
    Ok(TargetLoss { value, grad, renders })
}

/// Warp loss of a scalar field and its gradients; absent inputs drop the
/// corresponding term and come back as `None`.
#[derive(Clone, Debug)]
pub struct WarpLoss {
    pub value: f64,
    pub grad_prev: Option<ScalarGrid>,
    pub grad_cur: ScalarGrid,
    pub grad_next: Option<ScalarGrid>,
    pub grad_u_prev: Option<VectorGrid>,
    pub grad_u_cur: Option<VectorGrid>,
}

/// `|A(s_prev, u_prev) - s_cur|² + |A(s_cur, u_cur) - s_next|²`.
pub fn warp_loss(
    prev: Option<(&ScalarGrid, &VectorGrid)>,
    s_cur: &ScalarGrid,
    next: Option<(&VectorGrid, &ScalarGrid)>,
    scheme: AdvectionScheme,
) -> Result<WarpLoss> {
    let mut value = 0.0;
    let mut grad_cur = ScalarGrid::zeros(*s_cur.geom());
    let (mut grad_prev, mut grad_u_prev, mut grad_next, mut grad_u_cur) = (None, None, None, None);
    if let Some((s_prev, u_prev)) = prev {
        let r = advect(s_prev, u_prev, scheme)?.zip_map(s_cur, |a, b| a - b)?;
        value += r.dot(&r);
        let g = r.map(|v| 2.0 * v);
        let (gs, gu) = advect_vjp(s_prev, u_prev, &g, scheme)?;
        grad_cur.add_scaled(&g, -1.0);
        grad_prev = Some(gs);
        grad_u_prev = Some(gu);
    }
    if let Some((u_cur, s_next)) = next {
        let r = advect(s_cur, u_cur, scheme)?.zip_map(s_next, |a, b| a - b)?;
        value += r.dot(&r);
        let g = r.map(|v| 2.0 * v);
        let (gs, gu) = advect_vjp(s_cur, u_cur, &g, scheme)?;
        grad_cur.add_scaled(&gs, 1.0);
        grad_next = Some(g.map(|v| -v));
        grad_u_cur = Some(gu);
    }
    Ok(WarpLoss {
        value,
        grad_prev,
        grad_cur,
        grad_next,
        grad_u_prev,
        grad_u_cur,
    })
}

/// Warp loss of a vector field `v` transported by `u`.
#[derive(Clone, Debug)]
pub struct VectorWarpLoss {
    pub value: f64,
    pub grad_prev: Option<VectorGrid>,
    pub grad_cur: VectorGrid,
    pub grad_next: Option<VectorGrid>,
    pub grad_u_prev: Option<VectorGrid>,
    pub grad_u_cur: Option<VectorGrid>,
}

pub fn warp_loss_vector(
    prev: Option<(&VectorGrid, &VectorGrid)>,
    v_cur: &VectorGrid,
    next: Option<(&VectorGrid, &VectorGrid)>,
    scheme: AdvectionScheme,
) -> Result<VectorWarpLoss> {
    let mut value = 0.0;
    let mut grad_cur = VectorGrid::zeros(*v_cur.geom());
    let (mut grad_prev, mut grad_u_prev, mut grad_next, mut grad_u_cur) = (None, None, None, None);
    let residual = |a: &VectorGrid, b: &VectorGrid| -> Result<VectorGrid> {
        ensure_same(a.dims(), b.dims(), "vector warp residual")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| *x - *y).collect();
        VectorGrid::from_data(*a.geom(), data)
    };
    if let Some((v_prev, u_prev)) = prev {
        let r = residual(&advect_vector(v_prev, u_prev, scheme)?, v_cur)?;
        value += r.dot(&r);
        let g = r.map(|v| v * 2.0);
        let (gv, gu) = advect_vector_vjp(v_prev, u_prev, &g, scheme)?;
        grad_cur.add_scaled(&g, -1.0);
        grad_prev = Some(gv);
        grad_u_prev = Some(gu);
    }
    if let Some((u_cur, v_next)) = next {
        let r = residual(&advect_vector(v_cur, u_cur, scheme)?, v_next)?;
        value += r.dot(&r);
        let g = r.map(|v| v * 2.0);
        let (gv, gu) = advect_vector_vjp(v_cur, u_cur, &g, scheme)?;
        grad_cur.add_scaled(&gv, 1.0);
        grad_next = Some(g.map(|v| -v));
        grad_u_cur = Some(gu);
    }
    Ok(VectorWarpLoss {
        value,
        grad_prev,
        grad_cur,
        grad_next,
        grad_u_prev,
        grad_u_cur,
    })
}

/// `Σ (∇·u)²` and its gradient.
pub fn div_loss(u: &VectorGrid) -> (f64, VectorGrid) {
    let div = u.divergence();
    let value = div.dot(&div);
    let grad = VectorGrid::divergence_adjoint(&div.map(|v| 2.0 * v));
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeom;
    use crate::math::Vec3;

    fn geom(n: usize) -> GridGeom {
        GridGeom::new(Dims::cube(n), Vec3::ZERO, 1.0)
    }

    #[test]
    fn ramps_interpolate() {
        let lin = Ramp::linear(2.0, 4.0);
        assert_eq!(lin.value(0.5), 3.0);
        let exp = Ramp::exponential(1.0, 100.0);
        assert!((exp.value(0.5) - 10.0).abs() < 1e-12);
        assert_eq!(exp.value(2.0), 100.0);
        assert_eq!(Ramp::exponential(0.0, 1.0).value(0.25), 0.25);
    }

    #[test]
    fn default_weights_match_table_and_validate() {
        let w = LossWeights::default();
        w.validate().unwrap();
        assert_eq!(w.target, 1.74e-5);
        assert_eq!(w.at(0.0).warp_dens, 2.7e-10);
        assert!((w.at(1.0).warp_dens - 5.4e-10).abs() < 1e-24);
        assert!((w.at(1.0).div - 1.7e-8).abs() < 1e-20);
        let r = w.rescaled(Dims::cube(32));
        assert!((r.target / w.target - 64.0).abs() < 1e-12);
        let bad = LossWeights {
            beta_ema: 1.5,
            ..w
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn div_loss_of_constant_and_ramp() {
        let g = geom(5);
        let (v, grad) = div_loss(&VectorGrid::filled(g, Vec3::new(1.0, -2.0, 0.5)));
        assert_eq!(v, 0.0);
        assert!(grad.data().iter().all(|g| *g == Vec3::ZERO));
        let ramp = VectorGrid::from_fn(g, |p| Vec3::new(p.x, 0.0, 0.0));
        let div = ramp.divergence();
        for k in 0..5 {
            for j in 0..5 {
                for i in 1..4 {
                    assert!((div.get(i, j, k) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_triple_has_zero_warp_loss() {
        let g = geom(6);
        let s0 = ScalarGrid::from_fn(g, |p| (p.x * 0.7).sin() + p.y * 0.1 + 1.0);
        let u = VectorGrid::from_fn(g, |p| Vec3::new(0.3 + 0.05 * p.y, -0.2, 0.1));
        let scheme = AdvectionScheme::default();
        let s1 = advect(&s0, &u, scheme).unwrap();
        let s2 = advect(&s1, &u, scheme).unwrap();
        let w = warp_loss(Some((&s0, &u)), &s1, Some((&u, &s2)), scheme).unwrap();
        assert_eq!(w.value, 0.0);
        assert!(w.grad_cur.data().iter().all(|v| *v == 0.0));
        assert!(w.grad_u_cur.unwrap().data().iter().all(|v| *v == Vec3::ZERO));
        let still = VectorGrid::zeros(g);
        let w = warp_loss(Some((&s0, &still)), &s0, Some((&still, &s0)), scheme).unwrap();
        assert_eq!(w.value, 0.0);
    }
}
