//! Evaluation of a reconstruction against its scene bundle.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advect::AdvectionScheme;
use crate::error::{Error, Result};
use crate::grid::{GridGeom, ScalarGrid, VectorGrid};
use crate::io::write_csv;
use crate::metrics::{psnr, rmse, rmse_vector, ssim, ssim_volume, transport_error, warp_test};
use crate::optim::ReconState;
use crate::render::{render_views, Camera, RenderSettings, View};
use crate::sim::SceneBundle;

pub const DEFAULT_HELDOUT_VIEWS: usize = 8;
/// Images are compared on a unit intensity scale.
pub const IMAGE_PEAK: f64 = 1.0;

/// Per-frame metrics that need no ground truth.
pub const IMAGE_METRICS: [&str; 3] = ["train_psnr", "train_ssim", "transport_error"];
/// Per-frame metrics that compare against ground truth.
pub const TRUTH_METRICS: [&str; 5] = ["density_rmse", "density_ssim", "velocity_rmse", "heldout_psnr", "heldout_ssim"];

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub heldout: usize,
    pub seed: u64,
    pub render: RenderSettings,
    pub scheme: AdvectionScheme,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            heldout: DEFAULT_HELDOUT_VIEWS,
            seed: 0,
            render: RenderSettings::default(),
            scheme: AdvectionScheme::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    /// `None` for sequence-level rows.
    pub frame: Option<usize>,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    fn push(&mut self, frame: Option<usize>, metric: &str, value: f64) {
        self.rows.push(EvalRow {
            frame,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn per_frame(&self, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.frame.is_some() && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v = self.per_frame(metric);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summary(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.frame.is_none() && r.metric == metric).map(|r| r.value)
    }

    /// Columns `frame,metric,value`; sequence-level rows use `all`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.frame.map_or_else(|| "all".to_string(), |f| f.to_string()),
                    r.metric.clone(),
                    format!("{:e}", r.value),
                ]
            })
            .collect();
        write_csv(path, &["frame", "metric", "value"], &rows)
    }
}

/// `count` cameras made by rotating the first training camera about the
/// vertical axis through the grid center by seeded random angles.
pub fn heldout_cameras(bundle: &SceneBundle, count: usize, seed: u64) -> Result<Vec<Camera>> {
    let base = bundle
        .cameras
        .first()
        .ok_or_else(|| Error::InvalidInput("scene has no cameras".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pivot = bundle.geom.center();
    Ok((0..count)
        .map(|_| base.rotated_about_y(pivot, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect())
}

/// Scores `state` against the bundle's targets and, when present, its ground
/// truth. Frame 0 has no predecessor and reports zero transport error.
pub fn evaluate(state: &ReconState, bundle: &SceneBundle, opts: &EvalOptions) -> Result<EvalReport> {
    let f = state.frames();
    if f != bundle.frames() {
        return Err(Error::ShapeMismatch(format!("state has {f} frames, scene has {}", bundle.frames())));
    }
    let views = bundle.views();
    let inflow = state.global.then_some(&state.inflow[..]);
    let transport = transport_error(&state.density, &state.velocity, &state.hull, inflow, opts.scheme)?;
    let mut report = EvalReport::default();
    for t in 0..f {
        let imgs = render_views(&state.density[t], &bundle.lights, &views, &opts.render)?;
        let (mut p, mut s) = (0.0, 0.0);
        for (img, target) in imgs.iter().zip(&bundle.targets[t]) {
            p += psnr(img, target, IMAGE_PEAK)?;
            s += ssim(img, target)?;
        }
        report.push(Some(t), "train_psnr", p / views.len() as f64);
        report.push(Some(t), "train_ssim", s / views.len() as f64);
        report.push(Some(t), "transport_error", if t == 0 { 0.0 } else { transport[t - 1] });
    }
    let Some(gt) = &bundle.ground_truth else {
        return Ok(report);
    };
    let held: Vec<View> = heldout_cameras(bundle, opts.heldout, opts.seed)?
        .into_iter()
        .map(|c| View::new(c, bundle.background.clone()))
        .collect();
    for t in 0..f {
        let (rho, rho_gt) = (&state.density[t], &gt.density[t]);
        let hull = &state.hull[t];
        let gt_on_grid = on_grid(rho_gt, rho.geom());
        report.push(Some(t), "density_rmse", rmse(rho, &gt_on_grid, Some(hull))?);
        report.push(Some(t), "density_ssim", ssim_volume(rho, &gt_on_grid)?);
        let u_gt = vector_on_grid(&gt.velocity[t], state.velocity[t].geom());
        report.push(Some(t), "velocity_rmse", rmse_vector(&state.velocity[t], &u_gt, Some(hull))?);
        let (mut p, mut s) = (0.0, 0.0);
        if !held.is_empty() {
            let ours = render_views(rho, &bundle.lights, &held, &opts.render)?;
            let theirs = render_views(rho_gt, &bundle.lights, &held, &opts.render)?;
            for (a, b) in ours.iter().zip(&theirs) {
                p += psnr(a, b, IMAGE_PEAK)?;
                s += ssim(a, b)?;
            }
            p /= held.len() as f64;
            s /= held.len() as f64;
        }
        report.push(Some(t), "heldout_psnr", p);
        report.push(Some(t), "heldout_ssim", s);
    }
    let (ours, truth) = warp_test_errors(state, bundle, opts.scheme)?;
    report.push(None, "warp_test", ours);
    report.push(None, "warp_test_gt", truth);
    let names: Vec<&str> = IMAGE_METRICS.iter().chain(&TRUTH_METRICS).copied().collect();
    for m in names {
        if let Some(v) = report.mean(m) {
            report.push(None, &format!("mean_{m}"), v);
        }
    }
    Ok(report)
}

/// Final-frame hull RMSE after advecting the true initial density with the
/// reconstructed velocities and with the true ones. Inflow is left out of
/// both runs.
pub fn warp_test_errors(state: &ReconState, bundle: &SceneBundle, scheme: AdvectionScheme) -> Result<(f64, f64)> {
    let gt = bundle
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("warp test needs ground truth".into()))?;
    let f = state.frames();
    let geom = *state.density[0].geom();
    let start = on_grid(&gt.density[0], &geom);
    let last_gt = on_grid(&gt.density[f - 1], &geom);
    let gt_u: Vec<_> = gt.velocity[..f - 1].iter().map(|u| vector_on_grid(u, &geom)).collect();
    let ours = warp_test(&start, &state.velocity[..f - 1], scheme)?;
    let theirs = warp_test(&start, &gt_u, scheme)?;
    let hull = &state.hull[f - 1];
    Ok((rmse(&ours, &last_gt, Some(hull))?, rmse(&theirs, &last_gt, Some(hull))?))
}

// Same-sized grids are compared cell for cell; checkpoints store their
// geometry in single precision.
fn on_grid(g: &ScalarGrid, geom: &GridGeom) -> ScalarGrid {
    if g.dims() == geom.dims {
        g.clone()
    } else {
        g.resample_to(geom)
    }
}

fn vector_on_grid(g: &VectorGrid, geom: &GridGeom) -> VectorGrid {
    if g.dims() == geom.dims {
        g.clone()
    } else {
        g.resample_to(geom)
    }
}
