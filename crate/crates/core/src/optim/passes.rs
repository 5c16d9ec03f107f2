use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::Adam;
use crate::advect::{advect, advect_vector, advect_vjp, AdvectionScheme};
use crate::disc::Discriminator;
use crate::error::{Error, Result};
use crate::grid::{check_finite, Dims, GridGeom, ScalarGrid, VectorGrid};
use crate::image::Image;
use crate::losses::{div_loss, target_loss, warp_loss, warp_loss_vector, FrameWeights, LossWeights, Ramp};
use crate::math::Vec3;
use crate::render::{render_views, render_views_vjp, View};

use super::scene::{Level, ReconScene};
use super::state::{constrain_density, place_inflow, ReconState};
use super::{ladder, LossLog, LossTerms, PrePassWeights, ReconConfig, Variant};

fn progress(i: usize, n: usize) -> f64 {
    if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        1.0
    }
}

fn check_vector(g: &VectorGrid, term: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { term: term.to_string() })
    }
}

fn step_scalar(adam: &mut Adam, x: &mut ScalarGrid, grad: &ScalarGrid, term: &str) -> Result<()> {
    check_finite(grad, term)?;
    adam.step(x.data_mut(), grad.data());
    Ok(())
}

fn step_vector(adam: &mut Adam, u: &mut VectorGrid, grad: &VectorGrid, term: &str) -> Result<()> {
    check_vector(grad, term)?;
    let mut p = u.as_flat();
    adam.step(&mut p, &grad.as_flat());
    u.set_flat(&p);
    Ok(())
}

/// Zeroes the gradient where `max(ρ + inflow, 0)` is clipped.
fn clip_grad(g: &mut ScalarGrid, rho: &ScalarGrid, inflow: &ScalarGrid) {
    let it = g.data_mut().iter_mut().zip(rho.data()).zip(inflow.data());
    for ((g, r), i) in it {
        if r + i < 0.0 {
            *g = 0.0;
        }
    }
}

/// Uniform random velocity of `amp` cells per frame inside the hull.
fn random_velocity(geom: GridGeom, hull: &ScalarGrid, amp: f64, rng: &mut impl Rng) -> VectorGrid {
    let s = amp * geom.cell_size;
    let mut u = VectorGrid::zeros(geom);
    for (v, h) in u.data_mut().iter_mut().zip(hull.data()) {
        let r = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        *v = if *h > 0.5 { r * s } else { Vec3::ZERO };
    }
    u
}

/// The discriminator with the fakes rendered since its last update.
struct DiscTerm {
    disc: Discriminator,
    fakes: Vec<Image>,
}

impl DiscTerm {
    fn new(scene: &ReconScene, config: &ReconConfig, rng: &mut impl Rng) -> Result<Self> {
        let disc = Discriminator::new(config.disc.clone(), rng)?;
        let need = disc.net.min_input_size();
        let small = scene
            .views
            .iter()
            .map(|v| v.camera.width.min(v.camera.height))
            .chain(scene.refs.iter().map(|r| r.width().min(r.height())))
            .any(|s| s < need);
        if small {
            return Err(Error::InvalidInput(format!("discriminator needs images of at least {need} px")));
        }
        Ok(Self { disc, fakes: Vec::new() })
    }

    fn reals(&self, scene: &ReconScene, rng: &mut impl Rng) -> Vec<Image> {
        (0..self.disc.config.real_batch)
            .map(|_| scene.refs[rng.gen_range(0..scene.refs.len())].clone())
            .collect()
    }

    /// Generator loss on renders from training cameras spun about the
    /// vertical axis, and its density gradient.
    fn density_grad(
        &mut self,
        scene: &ReconScene,
        config: &ReconConfig,
        rho: &ScalarGrid,
        rng: &mut impl Rng,
    ) -> Result<(f64, ScalarGrid)> {
        let pivot = scene.geom.center();
        let views: Vec<View> = (0..self.disc.config.fake_batch.max(1))
            .map(|_| {
                let v = &scene.views[rng.gen_range(0..scene.views.len())];
                View::new(v.camera.rotated_about_y(pivot, rng.gen_range(0.0..TAU)), v.background.clone())
            })
            .collect();
        let fakes = render_views(rho, &scene.lights, &views, &config.render)?;
        let reals = self.reals(scene, rng);
        let (value, grads) = self.disc.density_grad(&reals, &fakes)?;
        let grad = render_views_vjp(rho, &scene.lights, &views, &config.render, &grads)?;
        self.fakes.extend(fakes);
        Ok((value, grad))
    }

    /// One update on a random subset of the fakes collected this iteration.
    fn train(&mut self, scene: &ReconScene, rng: &mut impl Rng) -> Result<f64> {
        if self.fakes.is_empty() {
            return Ok(0.0);
        }
        let n = self.disc.config.fake_batch.max(1).min(self.fakes.len());
        let fakes: Vec<Image> = (0..n)
            .map(|_| self.fakes[rng.gen_range(0..self.fakes.len())].clone())
            .collect();
        let reals = self.reals(scene, rng);
        let loss = self.disc.train_step(&reals, &fakes, rng)?;
        self.fakes.clear();
        Ok(loss)
    }
}

/// Velocity fit between two densities: Adam on
/// `w_warp |A(ρa, u) - ρb|² + w_div |∇·u|²`, optionally over a resolution
/// ladder switched every `interval` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFit {
    pub levels: Vec<Dims>,
    pub interval: usize,
    pub iterations: usize,
    pub w_warp: f64,
    pub w_div: Ramp,
    pub lr: f64,
    pub scheme: AdvectionScheme,
}

impl VelocityFit {
    /// Fits `u` and returns it at its input resolution.
    pub fn run(&self, rho_a: &ScalarGrid, rho_b: &ScalarGrid, mut u: VectorGrid, log: &mut LossLog) -> Result<VectorGrid> {
        if self.levels.is_empty() {
            return Err(Error::InvalidInput("velocity fit needs at least one level".into()));
        }
        let base = u.dims();
        let mut cur = usize::MAX;
        let (mut a, mut b) = (rho_a.clone(), rho_b.clone());
        let mut adam = Adam::new(0, self.lr);
        for i in 0..self.iterations {
            let li = level_index(i, self.interval, self.levels.len());
            if li != cur {
                cur = li;
                let d = self.levels[li];
                u = u.resample(d);
                a = rho_a.resample(d);
                b = rho_b.resample(d);
                adam = Adam::new(3 * d.len(), self.lr);
            }
            let mut terms = LossTerms::default();
            let mut grad = VectorGrid::zeros(*u.geom());
            if self.w_warp > 0.0 {
                let wl = warp_loss(None, &a, Some((&u, &b)), self.scheme)?;
                terms.warp_dens = self.w_warp * wl.value;
                if let Some(gu) = wl.grad_u_cur {
                    grad.add_scaled(&gu, self.w_warp);
                }
            }
            let wd = self.w_div.value(progress(i, self.iterations));
            if wd > 0.0 {
                let (v, g) = div_loss(&u);
                terms.div = wd * v;
                grad.add_scaled(&g, wd);
            }
            step_vector(&mut adam, &mut u, &grad, "velocity")?;
            let row = log.rows.len();
            log.push("pre-velocity", row, terms)?;
        }
        Ok(u.resample(base))
    }
}

struct Ctx<'a> {
    scene: &'a ReconScene,
    config: &'a ReconConfig,
    weights: LossWeights,
    pre: PrePassWeights,
}

impl<'a> Ctx<'a> {
    fn new(scene: &'a ReconScene, config: &'a ReconConfig) -> Result<Self> {
        config.validate()?;
        let (weights, pre) = config.effective_weights(scene.base_dims());
        Ok(Self {
            scene,
            config,
            weights,
            pre,
        })
    }

    fn scheme(&self) -> AdvectionScheme {
        self.config.scheme
    }

    fn target_term(&self, level: &Level, t: usize, rho: &ScalarGrid, w: f64) -> Result<(f64, ScalarGrid)> {
        let tl = target_loss(rho, &self.scene.lights, &level.views, &level.targets[t], &self.config.render)?;
        let mut g = tl.grad;
        g.scale(w);
        Ok((w * tl.value, g))
    }

    /// Per-iteration Adam over one density grid with clipping to the hull.
    #[allow(clippy::too_many_arguments)]
    fn opt_density(
        &self,
        level: &Level,
        t: usize,
        rho: &mut ScalarGrid,
        iterations: usize,
        lr: Ramp,
        pass: &'static str,
        log: &mut LossLog,
    ) -> Result<()> {
        let mut adam = Adam::new(rho.data().len(), lr.value(0.0));
        for i in 0..iterations {
            let (value, g) = self.target_term(level, t, rho, self.pre.target)?;
            adam.lr = lr.value(progress(i, iterations));
            step_scalar(&mut adam, rho, &g, "target")?;
            constrain_density(rho, &level.hulls[t]);
            let row = log.rows.len();
            log.push(pass, row, LossTerms { target: value, ..LossTerms::default() })?;
        }
        Ok(())
    }

    /// Density gradient of frame `t`: target, density warp against both
    /// neighbours, and the discriminator term.
    fn frame_density_grad(
        &self,
        level: &Level,
        state: &ReconState,
        t: usize,
        fw: &FrameWeights,
        disc: Option<&mut DiscTerm>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(LossTerms, ScalarGrid)> {
        let f = state.frames();
        let rho = &state.density[t];
        let (target, mut g) = self.target_term(level, t, rho, fw.target)?;
        let mut terms = LossTerms { target, ..LossTerms::default() };
        if fw.warp_dens > 0.0 && f > 1 {
            let scheme = self.scheme();
            if t > 0 {
                let prev = state.composed(t - 1)?;
                let wl = warp_loss(Some((&prev, &state.velocity[t - 1])), rho, None, scheme)?;
                terms.warp_dens += fw.warp_dens * wl.value;
                g.add_scaled(&wl.grad_cur, fw.warp_dens);
            }
            if t + 1 < f {
                let cur = state.composed(t)?;
                let wl = warp_loss(None, &cur, Some((&state.velocity[t], &state.density[t + 1])), scheme)?;
                let mut gc = wl.grad_cur;
                if state.global {
                    clip_grad(&mut gc, rho, &state.inflow[t]);
                }
                terms.warp_dens += fw.warp_dens * wl.value;
                g.add_scaled(&gc, fw.warp_dens);
            }
        }
        if let Some(d) = disc {
            if fw.disc > 0.0 {
                let (v, gd) = d.density_grad(self.scene, self.config, rho, rng)?;
                terms.disc = fw.disc * v;
                g.add_scaled(&gd, fw.disc);
            }
        }
        Ok((terms, g))
    }

    /// Velocity gradient of frame `t < F - 1`: density warp, velocity
    /// self-advection warp (not differentiated through the advecting field),
    /// and divergence.
    fn velocity_grad(&self, state: &ReconState, t: usize, fw: &FrameWeights) -> Result<(LossTerms, VectorGrid)> {
        let f = state.frames();
        let u = &state.velocity[t];
        let scheme = self.scheme();
        let mut terms = LossTerms::default();
        let mut grad = VectorGrid::zeros(*u.geom());
        if fw.vel_warp_dens > 0.0 {
            let cur = state.composed(t)?;
            let wl = warp_loss(None, &cur, Some((u, &state.density[t + 1])), scheme)?;
            terms.warp_dens = fw.vel_warp_dens * wl.value;
            if let Some(gu) = wl.grad_u_cur {
                grad.add_scaled(&gu, fw.vel_warp_dens);
            }
        }
        if fw.warp_vel > 0.0 {
            let prev = (t > 0).then(|| (&state.velocity[t - 1], &state.velocity[t - 1]));
            let next = (t + 1 < f).then(|| (u, &state.velocity[t + 1]));
            let wl = warp_loss_vector(prev, u, next, scheme)?;
            terms.warp_vel = fw.warp_vel * wl.value;
            grad.add_scaled(&wl.grad_cur, fw.warp_vel);
        }
        if fw.div > 0.0 {
            let (v, g) = div_loss(u);
            terms.div = fw.div * v;
            grad.add_scaled(&g, fw.div);
        }
        Ok((terms, grad))
    }
}

/// Independent per-frame tomography at the base resolution.
pub fn single_pass(scene: &ReconScene, config: &ReconConfig, log: &mut LossLog) -> Result<ReconState> {
    let ctx = Ctx::new(scene, config)?;
    let s = &config.schedule;
    let level = scene.level(scene.base_dims());
    let mut density = Vec::with_capacity(scene.frames());
    for t in 0..scene.frames() {
        let mut rho = level.hulls[t].map(|h| h * s.density_init);
        ctx.opt_density(&level, t, &mut rho, s.pre_first_density_iterations, Ramp::constant(s.lr_density_first), "single", log)?;
        density.push(rho);
    }
    ReconState::from_densities(density, level.hulls, Variant::Single, config.seed)
}

/// Forward pass at `dims`: frame by frame, each density initialized by
/// advecting its predecessor and each velocity by self-advection of the
/// previous one.
pub fn pre_pass(
    scene: &ReconScene,
    config: &ReconConfig,
    dims: Dims,
    variant: Variant,
    rng: &mut ChaCha8Rng,
    log: &mut LossLog,
) -> Result<ReconState> {
    let ctx = Ctx::new(scene, config)?;
    let s = &config.schedule;
    let pre = ctx.pre;
    let scheme = ctx.scheme();
    let level = scene.level(dims);
    let f = scene.frames();
    log::info!("pre-pass: {f} frames at {}x{}x{}", dims.nx, dims.ny, dims.nz);

    let mut rho0 = level.hulls[0].map(|h| h * s.density_init);
    ctx.opt_density(&level, 0, &mut rho0, s.pre_first_density_iterations, Ramp::constant(s.lr_density_first), "pre-density", log)?;
    let mut density = vec![rho0];
    let mut velocity = Vec::with_capacity(f);
    if f > 1 {
        let mut rho1 = density[0].clone();
        constrain_density(&mut rho1, &level.hulls[1]);
        ctx.opt_density(&level, 1, &mut rho1, s.pre_density_iterations, s.lr_density_pre, "pre-density", log)?;
        density.push(rho1);
        let u0 = random_velocity(level.geom, &level.hulls[1], s.velocity_init, rng);
        let first_levels = ladder(dims, s.pre_first_ms_steps, s.growth);
        let fit = VelocityFit {
            levels: first_levels,
            interval: s.pre_first_ms_interval,
            iterations: s.pre_first_velocity_iterations,
            w_warp: pre.vel_warp_dens,
            w_div: pre.div_first,
            lr: s.lr_velocity_first,
            scheme,
        };
        let u0 = fit.run(&density[0], &density[1], u0, log)?;
        velocity.push(u0);
        let fit = VelocityFit {
            levels: vec![dims],
            interval: 0,
            iterations: s.pre_velocity_iterations,
            w_warp: pre.vel_warp_dens,
            w_div: Ramp::constant(pre.div),
            lr: s.lr_velocity_pre,
            scheme,
        };
        for t in 1..f - 1 {
            let u = advect_vector(&velocity[t - 1], &velocity[t - 1], scheme)?;
            let mut next = advect(&density[t], &u, scheme)?;
            constrain_density(&mut next, &level.hulls[t + 1]);
            ctx.opt_density(&level, t + 1, &mut next, s.pre_density_iterations, s.lr_density_pre, "pre-density", log)?;
            density.push(next);
            let u = fit.run(&density[t], &density[t + 1], u, log)?;
            velocity.push(u);
        }
        velocity.push(advect_vector(&velocity[f - 2], &velocity[f - 2], scheme)?);
    } else {
        velocity.push(VectorGrid::zeros(level.geom));
    }
    let mut state = ReconState::from_densities(density, level.hulls, variant, config.seed)?;
    state.velocity = velocity;
    Ok(state)
}

fn main_levels(scene: &ReconScene, config: &ReconConfig, variant: Variant) -> Vec<Dims> {
    if variant.multiscale() {
        ladder(scene.base_dims(), config.schedule.ms_steps, config.schedule.growth)
    } else {
        vec![scene.base_dims()]
    }
}

fn level_index(it: usize, interval: usize, levels: usize) -> usize {
    if levels > 1 && interval > 0 {
        (it / interval).min(levels - 1)
    } else {
        levels - 1
    }
}

fn fresh_adams(n: usize, count: usize, lr: f64) -> Vec<Adam> {
    (0..count).map(|_| Adam::new(n, lr)).collect()
}

/// Joint optimization of every frame's density and velocity, frames in
/// ascending order within each iteration.
pub fn coupled_pass(
    state: &mut ReconState,
    scene: &ReconScene,
    config: &ReconConfig,
    use_disc: bool,
    rng: &mut ChaCha8Rng,
    log: &mut LossLog,
) -> Result<()> {
    let ctx = Ctx::new(scene, config)?;
    let s = &config.schedule;
    let f = state.frames();
    let levels = main_levels(scene, config, state.variant);
    let mut disc = if use_disc { Some(DiscTerm::new(scene, config, rng)?) } else { None };
    let mut cur = usize::MAX;
    let mut level = scene.level(levels[0]);
    let (mut adam_rho, mut adam_u) = (Vec::new(), Vec::new());
    for it in 0..s.iterations {
        let li = level_index(it, s.ms_interval, levels.len());
        if li != cur {
            cur = li;
            level = scene.level(levels[li]);
            if state.dims() != levels[li] {
                state.resize(levels[li], level.hulls.clone(), ctx.scheme())?;
            }
            state.scale = li;
            let n = levels[li].len();
            adam_rho = fresh_adams(n, f, s.lr_density);
            adam_u = fresh_adams(3 * n, f, s.lr_velocity.start);
            log::info!("coupled pass: level {li} at {:?}", levels[li]);
        }
        let p = progress(it, s.iterations);
        let fw = ctx.weights.at(p);
        let mut terms = LossTerms::default();
        for t in 0..f {
            let (dt, g) = ctx.frame_density_grad(&level, state, t, &fw, disc.as_mut(), rng)?;
            terms.add(&dt);
            step_scalar(&mut adam_rho[t], &mut state.density[t], &g, "density")?;
            constrain_density(&mut state.density[t], &state.hull[t]);
            if t + 1 < f {
                let (vt, gu) = ctx.velocity_grad(state, t, &fw)?;
                terms.add(&vt);
                adam_u[t].lr = s.lr_velocity.value(p);
                step_vector(&mut adam_u[t], &mut state.velocity[t], &gu, "velocity")?;
            }
        }
        state.rho0 = state.density[0].clone();
        if let Some(d) = disc.as_mut() {
            d.train(scene, rng)?;
        }
        log.push("main", it, terms)?;
        state.iteration = it + 1;
    }
    finish_at_base(state, scene, &levels, ctx.scheme())
}

fn finish_at_base(state: &mut ReconState, scene: &ReconScene, levels: &[Dims], scheme: AdvectionScheme) -> Result<()> {
    let base = scene.base_dims();
    if state.dims() != base {
        state.resize(base, scene.level(base).hulls, scheme)?;
        state.scale = levels.len() - 1;
    }
    if state.global {
        state.rebuild(scheme)?;
    }
    Ok(())
}

/// Gradients of one backward sweep over a rebuilt global sequence.
#[derive(Clone, Debug)]
pub struct GlobalGradients {
    pub rho0: ScalarGrid,
    /// Chained inflow gradient per frame; the last frame's is zero.
    pub inflow: Vec<ScalarGrid>,
    /// Velocity gradient per frame; the last frame's is zero.
    pub velocity: Vec<VectorGrid>,
    pub terms: LossTerms,
}

/// Backward sweep `t = F-1 ... 0` carrying the EMA-accumulated transport
/// gradient from each frame to its predecessor. Only the carried grid
/// crosses frame boundaries.
fn sweep(
    ctx: &Ctx,
    level: &Level,
    state: &ReconState,
    fw: &FrameWeights,
    mut disc: Option<&mut DiscTerm>,
    rng: &mut ChaCha8Rng,
) -> Result<GlobalGradients> {
    let f = state.frames();
    let w = &ctx.weights;
    let geom = *state.rho0.geom();
    let mut out = GlobalGradients {
        rho0: ScalarGrid::zeros(geom),
        inflow: vec![ScalarGrid::zeros(geom); f],
        velocity: vec![VectorGrid::zeros(geom); f],
        terms: LossTerms::default(),
    };
    let mut carried: Option<ScalarGrid> = None;
    for t in (0..f).rev() {
        let (dt, g_t) = ctx.frame_density_grad(level, state, t, fw, disc.as_deref_mut(), rng)?;
        out.terms.add(&dt);
        let chain = match carried.take() {
            Some(mut ga) => {
                ga.mul_assign(&state.hull[t + 1]);
                let comp = state.composed(t)?;
                let (mut gs, gu) = advect_vjp(&comp, &state.velocity[t], &ga, ctx.scheme())?;
                clip_grad(&mut gs, &state.density[t], &state.inflow[t]);
                Some((gs, gu))
            }
            None => None,
        };
        if t + 1 < f {
            let (vt, mut gu) = ctx.velocity_grad(state, t, fw)?;
            out.terms.add(&vt);
            if let Some((_, cu)) = &chain {
                gu.add_scaled(cu, w.lambda_u_a);
            }
            out.velocity[t] = gu;
        }
        let chain_rho = chain.map(|c| c.0);
        if let Some(c) = &chain_rho {
            let mut gi = c.clone();
            gi.mul_assign(&state.inflow_mask);
            gi.scale(w.lambda_rho_a);
            out.inflow[t] = gi;
        }
        if t == 0 {
            let mut g0 = g_t.clone();
            if let Some(c) = &chain_rho {
                g0.add_scaled(c, w.lambda_rho_a);
            }
            out.rho0 = g0;
        }
        let mut acc = g_t;
        acc.scale(1.0 - w.beta_ema);
        if let Some(c) = &chain_rho {
            acc.add_scaled(c, w.beta_ema);
        }
        carried = Some(acc);
    }
    Ok(out)
}

/// Gradients of a global-mode state at its current resolution for the
/// schedule point `progress`, without the discriminator term.
pub fn global_gradients(state: &ReconState, scene: &ReconScene, config: &ReconConfig, progress: f64) -> Result<GlobalGradients> {
    if !state.global {
        return Err(Error::InvalidInput("global gradients need a global-mode state".into()));
    }
    let ctx = Ctx::new(scene, config)?;
    let level = scene.level(state.dims());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    sweep(&ctx, &level, state, &ctx.weights.at(progress), None, &mut rng)
}

/// Switches a per-frame state to global mode: frame 0 becomes the only
/// density unknown and an inflow region is placed under the hulls.
fn enter_global(state: &mut ReconState, config: &ReconConfig) -> Result<()> {
    if state.global {
        return Ok(());
    }
    state.global = true;
    state.rho0 = state.density[0].clone();
    state.inflow_mask = place_inflow(&state.hull, config.schedule.inflow_overlap)?;
    let geom = *state.rho0.geom();
    state.inflow = vec![ScalarGrid::zeros(geom); state.frames()];
    state.rebuild(config.scheme)
}

/// Global-transport optimization of `ρ0`, inflow and velocities.
pub fn global_pass(
    state: &mut ReconState,
    scene: &ReconScene,
    config: &ReconConfig,
    use_disc: bool,
    rng: &mut ChaCha8Rng,
    log: &mut LossLog,
) -> Result<()> {
    let ctx = Ctx::new(scene, config)?;
    let s = &config.schedule;
    let f = state.frames();
    let levels = main_levels(scene, config, state.variant);
    enter_global(state, config)?;
    let mut disc = if use_disc { Some(DiscTerm::new(scene, config, rng)?) } else { None };
    let mut cur = usize::MAX;
    let mut level = scene.level(levels[0]);
    let mut adam_rho = Adam::new(0, s.lr_density);
    let (mut adam_in, mut adam_u) = (Vec::new(), Vec::new());
    for it in 0..s.iterations {
        let li = level_index(it, s.ms_interval, levels.len());
        if li != cur {
            cur = li;
            level = scene.level(levels[li]);
            if state.dims() != levels[li] {
                state.resize(levels[li], level.hulls.clone(), ctx.scheme())?;
            }
            state.scale = li;
            let n = levels[li].len();
            adam_rho = Adam::new(n, s.lr_density);
            adam_in = fresh_adams(n, f, s.lr_density);
            adam_u = fresh_adams(3 * n, f, s.lr_velocity.start);
            log::info!("global pass: level {li} at {:?}", levels[li]);
        }
        state.rebuild(ctx.scheme())?;
        let p = progress(it, s.iterations);
        let fw = ctx.weights.at(p);
        let grads = sweep(&ctx, &level, state, &fw, disc.as_mut(), rng)?;
        step_scalar(&mut adam_rho, &mut state.rho0, &grads.rho0, "density")?;
        for t in 0..f.saturating_sub(1) {
            step_scalar(&mut adam_in[t], &mut state.inflow[t], &grads.inflow[t], "inflow")?;
            adam_u[t].lr = s.lr_velocity.value(p);
            step_vector(&mut adam_u[t], &mut state.velocity[t], &grads.velocity[t], "velocity")?;
        }
        state.constrain();
        if let Some(d) = disc.as_mut() {
            d.train(scene, rng)?;
        }
        log.push("main", it, grads.terms)?;
        state.iteration = it + 1;
    }
    finish_at_base(state, scene, &levels, ctx.scheme())
}

/// Runs the pipeline of `variant`; the RNG is seeded from the config.
pub fn reconstruct(scene: &ReconScene, config: &ReconConfig, variant: Variant) -> Result<(ReconState, LossLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = LossLog::default();
    let base = scene.base_dims();
    let state = match variant {
        Variant::Single => single_pass(scene, config, &mut log)?,
        Variant::Forward => pre_pass(scene, config, base, variant, &mut rng, &mut log)?,
        Variant::Coupled | Variant::CoupledMs => {
            let start = main_levels(scene, config, variant)[0];
            let mut st = pre_pass(scene, config, start, variant, &mut rng, &mut log)?;
            coupled_pass(&mut st, scene, config, false, &mut rng, &mut log)?;
            st
        }
        Variant::GlobTrans | Variant::Full => {
            let start = main_levels(scene, config, variant)[0];
            let mut st = pre_pass(scene, config, start, variant, &mut rng, &mut log)?;
            global_pass(&mut st, scene, config, variant.uses_discriminator(), &mut rng, &mut log)?;
            st
        }
    };
    Ok((state, log))
}
