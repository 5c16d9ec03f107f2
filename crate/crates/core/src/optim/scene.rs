use crate::error::{Error, Result};
use crate::grid::{Dims, GridGeom, ScalarGrid};
use crate::hull::{binarize, carve, single_view_hull, DEFAULT_AUX_VIEWS, DEFAULT_MASK_BLUR, DEFAULT_THRESHOLD, DEFAULT_VOLUME_BLUR};
use crate::image::Image;
use crate::render::{LightConfig, View};
use crate::sim::SceneBundle;

/// Observations of a reconstruction: calibrated views, per-frame targets
/// and the visual hulls carved from them, plus optional reference images
/// for the discriminator.
#[derive(Clone, Debug)]
pub struct ReconScene {
    pub geom: GridGeom,
    pub lights: LightConfig,
    pub views: Vec<View>,
    /// `targets[t][c]`.
    pub targets: Vec<Vec<Image>>,
    /// Smooth hull per frame on the base grid.
    pub hulls: Vec<ScalarGrid>,
    pub refs: Vec<Image>,
}

impl ReconScene {
    pub fn new(
        geom: GridGeom,
        lights: LightConfig,
        views: Vec<View>,
        targets: Vec<Vec<Image>>,
        hulls: Vec<ScalarGrid>,
    ) -> Result<Self> {
        if targets.is_empty() || views.is_empty() {
            return Err(Error::InvalidInput("reconstruction needs at least one frame and one view".into()));
        }
        if targets.iter().any(|f| f.len() != views.len()) {
            return Err(Error::ShapeMismatch(format!("every frame needs {} target images", views.len())));
        }
        if hulls.len() != targets.len() || hulls.iter().any(|h| h.dims() != geom.dims) {
            return Err(Error::ShapeMismatch("one base-resolution hull per frame".into()));
        }
        for (f, t) in targets.iter().enumerate() {
            for (img, v) in t.iter().zip(&views) {
                if (img.width(), img.height()) != (v.camera.width, v.camera.height) {
                    return Err(Error::ShapeMismatch(format!("frame {f}: target size differs from its camera")));
                }
            }
        }
        let refs = targets.iter().flatten().cloned().collect();
        Ok(Self {
            geom,
            lights,
            views,
            targets,
            hulls,
            refs,
        })
    }

    /// Carves hulls from the bundle's targets: multi-view carving, or the
    /// mirrored auxiliary views when only one camera exists.
    pub fn from_bundle(bundle: &SceneBundle) -> Result<Self> {
        let views = bundle.views();
        let hulls = bundle
            .targets
            .iter()
            .map(|frame| {
                let masks = frame
                    .iter()
                    .zip(&bundle.cameras)
                    .map(|(img, cam)| binarize(&background_removed(img, &views[0])?, cam, DEFAULT_THRESHOLD, DEFAULT_MASK_BLUR))
                    .collect::<Result<Vec<_>>>()?;
                if masks.len() == 1 {
                    single_view_hull(&masks[0], bundle.geom, DEFAULT_AUX_VIEWS, DEFAULT_VOLUME_BLUR)
                } else {
                    carve(&masks, bundle.geom, DEFAULT_VOLUME_BLUR)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bundle.geom, bundle.lights.clone(), views, bundle.targets.clone(), hulls)
    }

    /// Replaces the discriminator's real samples.
    pub fn with_refs(mut self, refs: Vec<Image>) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::InvalidInput("reference set is empty".into()));
        }
        self.refs = refs;
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.targets.len()
    }

    pub fn base_dims(&self) -> Dims {
        self.geom.dims
    }

    /// Views, targets and binary hulls for a grid of `dims` cells; images
    /// shrink with the grid.
    pub(crate) fn level(&self, dims: Dims) -> Level {
        let f = dims.max_axis() as f64 / self.geom.dims.max_axis() as f64;
        let px = |n: usize| ((n as f64 * f).round() as usize).clamp(4, n.max(4));
        let views: Vec<View> = self
            .views
            .iter()
            .map(|v| v.with_resolution(px(v.camera.width), px(v.camera.height)))
            .collect();
        let targets = self
            .targets
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .zip(&views)
                    .map(|(img, v)| img.resize(v.camera.width, v.camera.height))
                    .collect()
            })
            .collect();
        let hulls = self.hulls.iter().map(|h| hull_indicator(&h.resample(dims))).collect();
        Level {
            geom: self.geom.resized(dims),
            views,
            targets,
            hulls,
        }
    }
}

fn background_removed(img: &Image, view: &View) -> Result<Image> {
    let (w, h, c) = img.shape();
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.set(x, y, ch, img.get(x, y, ch) - view.background.value(x, y, ch.min(view.background.channels() - 1)));
            }
        }
    }
    Ok(out)
}

/// Cells where the smooth hull exceeds one half.
pub(crate) fn hull_indicator(h: &ScalarGrid) -> ScalarGrid {
    h.map(|v| if v > crate::metrics::MASK_LEVEL { 1.0 } else { 0.0 })
}

/// One rung of the resolution ladder.
#[derive(Clone, Debug)]
pub(crate) struct Level {
    pub geom: GridGeom,
    pub views: Vec<View>,
    pub targets: Vec<Vec<Image>>,
    pub hulls: Vec<ScalarGrid>,
}
