//! Reconstruction engine: the forward pre-pass, the coupled pass over all
//! frames, and the global-transport pass that derives every frame from the
//! first density, per-frame inflow and the velocity sequence.

mod passes;
mod scene;
mod state;

pub use passes::{
    coupled_pass, global_gradients, global_pass, pre_pass, reconstruct, single_pass, GlobalGradients,
    VelocityFit,
};
pub use scene::ReconScene;
pub use state::{place_inflow, ReconState, DEFAULT_INFLOW_OVERLAP};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::advect::AdvectionScheme;
use crate::disc::DiscConfig;
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::io::write_csv;
use crate::losses::{LossWeights, Ramp};
use crate::render::RenderSettings;

/// Ablation variants of the reconstruction pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Independent per-frame tomography.
    Single,
    /// The forward pre-pass alone.
    Forward,
    /// Pre-pass followed by the coupled pass at full resolution.
    Coupled,
    /// Coupled pass with the multi-scale schedule.
    CoupledMs,
    /// Global transport with the multi-scale schedule.
    GlobTrans,
    /// Global transport with the learned discriminator loss.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Single,
        Variant::Forward,
        Variant::Coupled,
        Variant::CoupledMs,
        Variant::GlobTrans,
        Variant::Full,
    ];

    pub fn multiscale(self) -> bool {
        matches!(self, Variant::CoupledMs | Variant::GlobTrans | Variant::Full)
    }

    pub fn global(self) -> bool {
        matches!(self, Variant::GlobTrans | Variant::Full)
    }

    pub fn uses_discriminator(self) -> bool {
        self == Variant::Full
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Single => "single",
            Variant::Forward => "forward",
            Variant::Coupled => "coupled",
            Variant::CoupledMs => "coupled-ms",
            Variant::GlobTrans => "glob-trans",
            Variant::Full => "full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant '{s}'")))
    }
}

/// Loss weights of the forward pre-pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrePassWeights {
    pub target: f64,
    pub vel_warp_dens: f64,
    /// Divergence weight while the first velocity is built.
    pub div_first: Ramp,
    pub div: f64,
}

impl Default for PrePassWeights {
    fn default() -> Self {
        Self {
            target: 1.74e-5,
            vel_warp_dens: 4.1e-10,
            div_first: Ramp::exponential(8.6e-10, 2.6e-9),
            div: 2.6e-9,
        }
    }
}

impl PrePassWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ![self.target, self.vel_warp_dens, self.div, self.div_first.start, self.div_first.end]
            .into_iter()
            .all(ok)
        {
            return Err(Error::InvalidInput("pre-pass weights must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn rescaled(&self, dims: Dims) -> PrePassWeights {
        let s = crate::losses::REFERENCE_CELLS / dims.len() as f64;
        PrePassWeights {
            target: self.target * s,
            vel_warp_dens: self.vel_warp_dens * s,
            div_first: self.div_first.scaled(s),
            div: self.div * s,
        }
    }
}

/// Iteration counts, multi-scale intervals and learning rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub pre_first_density_iterations: usize,
    pub pre_density_iterations: usize,
    pub pre_first_velocity_iterations: usize,
    pub pre_first_ms_interval: usize,
    pub pre_first_ms_steps: usize,
    pub pre_velocity_iterations: usize,
    pub iterations: usize,
    pub ms_interval: usize,
    pub ms_steps: usize,
    pub growth: f64,
    pub lr_density_first: f64,
    pub lr_density_pre: Ramp,
    pub lr_density: f64,
    pub lr_velocity_first: f64,
    pub lr_velocity_pre: f64,
    pub lr_velocity: Ramp,
    /// Initial density inside the hull.
    pub density_init: f64,
    /// Amplitude of the random initial velocity, in cells per frame.
    pub velocity_init: f64,
    pub inflow_overlap: usize,
}

impl Schedule {
    /// Iteration counts and learning rates of the reference 128³ setup.
    pub fn reference() -> Self {
        Self {
            pre_first_density_iterations: 600,
            pre_density_iterations: 600,
            pre_first_velocity_iterations: 6000,
            pre_first_ms_interval: 1000,
            pre_first_ms_steps: 4,
            pre_velocity_iterations: 600,
            iterations: 4200,
            ms_interval: 400,
            ms_steps: 8,
            growth: 1.2,
            lr_density_first: 3.0,
            lr_density_pre: Ramp::linear(3.0, 1.0),
            lr_density: 2.4,
            lr_velocity_first: 0.04,
            lr_velocity_pre: 0.02,
            lr_velocity: Ramp::exponential(0.02, 0.016),
            density_init: 0.1,
            velocity_init: 0.1,
            inflow_overlap: DEFAULT_INFLOW_OVERLAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.growth > 1.0) {
            return Err(Error::InvalidInput(format!("growth factor {} must exceed 1", self.growth)));
        }
        let lrs = [
            self.lr_density_first,
            self.lr_density_pre.start,
            self.lr_density_pre.end,
            self.lr_density,
            self.lr_velocity_first,
            self.lr_velocity_pre,
            self.lr_velocity.start,
            self.lr_velocity.end,
            self.density_init,
            self.velocity_init,
        ];
        if lrs.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("learning rates and init values must be finite and >= 0".into()));
        }
        if self.ms_steps > 0 && self.ms_interval == 0 || self.pre_first_ms_steps > 0 && self.pre_first_ms_interval == 0 {
            return Err(Error::InvalidInput("multi-scale interval must be positive".into()));
        }
        Ok(())
    }
}

impl Default for Schedule {
    /// Desk-scale schedule for 32³ scenes.
    fn default() -> Self {
        Self {
            pre_first_density_iterations: 80,
            pre_density_iterations: 30,
            pre_first_velocity_iterations: 120,
            pre_first_ms_interval: 40,
            pre_first_ms_steps: 2,
            pre_velocity_iterations: 30,
            iterations: 60,
            ms_interval: 12,
            ms_steps: 3,
            growth: 1.2,
            lr_density_first: 0.1,
            lr_density_pre: Ramp::linear(0.1, 0.03),
            lr_density: 0.05,
            lr_velocity_first: 4e-3,
            lr_velocity_pre: 2e-3,
            lr_velocity: Ramp::exponential(2e-3, 1.6e-3),
            density_init: 0.5,
            velocity_init: 0.1,
            inflow_overlap: DEFAULT_INFLOW_OVERLAP,
        }
    }
}

/// Resolution ladder ending at `base`: `round(n / growth^k)` per axis for
/// `k = steps, ..., 0`, with repeated levels dropped.
pub fn ladder(base: Dims, steps: usize, growth: f64) -> Vec<Dims> {
    let mut out: Vec<Dims> = Vec::with_capacity(steps + 1);
    for k in (0..=steps).rev() {
        let f = growth.powi(k as i32);
        let s = |n: usize| (((n as f64) / f).round() as usize).max(1);
        let d = Dims::new(s(base.nx), s(base.ny), s(base.nz));
        if out.last() != Some(&d) {
            out.push(d);
        }
    }
    out
}

/// Everything a reconstruction run is configured with.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    pub weights: LossWeights,
    pub pre_weights: PrePassWeights,
    pub schedule: Schedule,
    pub render: RenderSettings,
    pub disc: DiscConfig,
    pub scheme: AdvectionScheme,
    pub seed: u64,
    /// Rescale loss weights from the reference cell count to the scene's.
    pub rescale_weights: bool,
}

/// Factor on the density-warp weights of the desk configuration; the
/// reference weights leave the transport terms too weak against the target
/// term at desk density and image scales.
pub const DESK_TRANSPORT_GAIN: f64 = 100.0;

/// Discriminator step size of the desk configuration, which trains it for
/// tens of iterations instead of thousands.
pub const DESK_DISC_LEARNING_RATE: f64 = 3e-3;

impl ReconConfig {
    /// Reference weights and schedule of the 128³ setup.
    pub fn reference() -> Self {
        Self {
            weights: LossWeights::default(),
            pre_weights: PrePassWeights::default(),
            schedule: Schedule::reference(),
            disc: DiscConfig::default(),
            ..Self::default()
        }
    }
}

impl Default for ReconConfig {
    /// Desk-scale configuration for 32³ scenes.
    fn default() -> Self {
        let mut weights = LossWeights::default();
        weights.warp_dens = weights.warp_dens.scaled(DESK_TRANSPORT_GAIN);
        weights.vel_warp_dens *= DESK_TRANSPORT_GAIN;
        let mut pre_weights = PrePassWeights::default();
        pre_weights.vel_warp_dens *= DESK_TRANSPORT_GAIN;
        Self {
            weights,
            pre_weights,
            schedule: Schedule::default(),
            render: RenderSettings::default(),
            disc: DiscConfig {
                learning_rate: DESK_DISC_LEARNING_RATE,
                ..DiscConfig::default()
            },
            scheme: AdvectionScheme::default(),
            seed: 0,
            rescale_weights: true,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.pre_weights.validate()?;
        self.schedule.validate()?;
        self.render.validate()?;
        self.disc.augment.validate()
    }

    /// Weights used on a scene of `dims` cells.
    pub fn effective_weights(&self, dims: Dims) -> (LossWeights, PrePassWeights) {
        if self.rescale_weights {
            (self.weights.rescaled(dims), self.pre_weights.rescaled(dims))
        } else {
            (self.weights, self.pre_weights)
        }
    }
}

/// Weighted loss terms summed over the frames of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub target: f64,
    pub warp_dens: f64,
    pub warp_vel: f64,
    pub div: f64,
    pub disc: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.target + self.warp_dens + self.warp_vel + self.div + self.disc
    }

    pub fn add(&mut self, o: &LossTerms) {
        self.target += o.target;
        self.warp_dens += o.warp_dens;
        self.warp_vel += o.warp_vel;
        self.div += o.div;
        self.disc += o.disc;
    }

    /// The first non-finite term, if any.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("target", self.target),
            ("warp_dens", self.warp_dens),
            ("warp_vel", self.warp_vel),
            ("div", self.div),
            ("disc", self.disc),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub pass: &'static str,
    pub iteration: usize,
    pub terms: LossTerms,
}

/// Loss curve of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub rows: Vec<LossRow>,
}

impl LossLog {
    pub fn push(&mut self, pass: &'static str, iteration: usize, terms: LossTerms) -> Result<()> {
        if let Some(term) = terms.non_finite() {
            return Err(Error::NonFinite { term: format!("{pass} loss term {term}") });
        }
        self.rows.push(LossRow { pass, iteration, terms });
        Ok(())
    }

    /// Totals of one pass in iteration order.
    pub fn totals(&self, pass: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.pass == pass).map(|r| r.terms.total()).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let t = &r.terms;
                vec![
                    r.pass.to_string(),
                    r.iteration.to_string(),
                    format!("{:e}", t.target),
                    format!("{:e}", t.warp_dens),
                    format!("{:e}", t.warp_vel),
                    format!("{:e}", t.div),
                    format!("{:e}", t.disc),
                    format!("{:e}", t.total()),
                ]
            })
            .collect();
        write_csv(
            path,
            &["pass", "iteration", "target", "warp_dens", "warp_vel", "div", "disc", "total"],
            &rows,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_ladders() {
        let main = ladder(Dims::cube(128), 8, 1.2);
        let sizes: Vec<usize> = main.iter().map(|d| d.nx).collect();
        assert_eq!(sizes, vec![30, 36, 43, 51, 62, 74, 89, 107, 128]);
        let pre = ladder(main[0], 4, 1.2);
        assert_eq!(pre.iter().map(|d| d.nx).collect::<Vec<_>>(), vec![14, 17, 21, 25, 30]);
        let desk = ladder(Dims::cube(32), 3, 1.2);
        assert_eq!(desk.iter().map(|d| d.nx).collect::<Vec<_>>(), vec![19, 22, 27, 32]);
        assert_eq!(ladder(Dims::cube(3), 8, 1.2).last(), Some(&Dims::cube(3)));
    }

    #[test]
    fn reference_config_keeps_table_values() {
        let r = ReconConfig::reference();
        assert_eq!(r.weights, LossWeights::default());
        assert_eq!(r.pre_weights, PrePassWeights::default());
        assert_eq!(r.disc, DiscConfig::default());
        let s = &r.schedule;
        assert_eq!((s.iterations, s.ms_interval, s.ms_steps), (4200, 400, 8));
        assert_eq!((s.pre_first_velocity_iterations, s.pre_first_ms_interval, s.pre_first_ms_steps), (6000, 1000, 4));
        assert_eq!(s.growth, 1.2);
        let d = ReconConfig::default();
        assert_eq!(d.weights.vel_warp_dens, DESK_TRANSPORT_GAIN * r.weights.vel_warp_dens);
        assert_eq!(d.disc.learning_rate, DESK_DISC_LEARNING_RATE);
    }

    #[test]
    fn variants_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("fast".parse::<Variant>().is_err());
    }

    #[test]
    fn non_finite_terms_are_reported() {
        let mut log = LossLog::default();
        let bad = LossTerms {
            div: f64::NAN,
            ..LossTerms::default()
        };
        let err = log.push("main", 0, bad).unwrap_err();
        assert!(err.to_string().contains("div"));
    }
}
