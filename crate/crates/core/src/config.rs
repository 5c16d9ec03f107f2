//! INI-style run configuration: `[weights]`, `[schedule]`, `[render]` and
//! `[disc]` sections of `key = value` lines. Ramps are written as a single
//! number, `lin START END` or `exp START END`.

use std::fs;
use std::path::Path;

use crate::advect::AdvectionScheme;
use crate::error::{Error, Result};
use crate::image::Background;
use crate::io::KeyValues;
use crate::losses::{Ramp, RampKind};
use crate::optim::ReconConfig;

pub const SECTIONS: [&str; 4] = ["weights", "schedule", "render", "disc"];

fn bad(key: &str, value: &str) -> Error {
    Error::InvalidInput(format!("bad value '{value}' for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad(key, value))
}

fn pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let v: Vec<&str> = value.split_whitespace().collect();
    match v[..] {
        [a, b] => Ok((num(key, a)?, num(key, b)?)),
        _ => Err(bad(key, value)),
    }
}

pub fn parse_ramp(key: &str, value: &str) -> Result<Ramp> {
    let v: Vec<&str> = value.split_whitespace().collect();
    match v[..] {
        [c] => Ok(Ramp::constant(num(key, c)?)),
        ["lin", a, b] => Ok(Ramp::linear(num(key, a)?, num(key, b)?)),
        ["exp", a, b] => Ok(Ramp::exponential(num(key, a)?, num(key, b)?)),
        _ => Err(bad(key, value)),
    }
}

pub fn format_ramp(r: &Ramp) -> String {
    if r.start == r.end {
        return r.start.to_string();
    }
    let kind = match r.kind {
        RampKind::Linear => "lin",
        RampKind::Exponential => "exp",
    };
    format!("{kind} {} {}", r.start, r.end)
}

fn scheme_name(s: AdvectionScheme) -> &'static str {
    match s {
        AdvectionScheme::SemiLagrangian => "sl",
        AdvectionScheme::MacCormackClamped => "maccormack",
    }
}

impl ReconConfig {
    /// Sets one field addressed as `section.key`.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let k = full.as_str();
        let (w, p, s, r, d) = (
            &mut self.weights,
            &mut self.pre_weights,
            &mut self.schedule,
            &mut self.render,
            &mut self.disc,
        );
        match k {
            "weights.target" => w.target = num(k, value)?,
            "weights.warp_dens" => w.warp_dens = parse_ramp(k, value)?,
            "weights.disc" => w.disc = num(k, value)?,
            "weights.vel_warp_dens" => w.vel_warp_dens = num(k, value)?,
            "weights.warp_vel" => w.warp_vel = parse_ramp(k, value)?,
            "weights.div" => w.div = parse_ramp(k, value)?,
            "weights.lambda_rho_a" => w.lambda_rho_a = num(k, value)?,
            "weights.lambda_u_a" => w.lambda_u_a = num(k, value)?,
            "weights.beta_ema" => w.beta_ema = num(k, value)?,
            "weights.pre_target" => p.target = num(k, value)?,
            "weights.pre_vel_warp_dens" => p.vel_warp_dens = num(k, value)?,
            "weights.pre_div_first" => p.div_first = parse_ramp(k, value)?,
            "weights.pre_div" => p.div = num(k, value)?,
            "weights.rescale" => self.rescale_weights = num(k, value)?,
            "schedule.seed" => self.seed = num(k, value)?,
            "schedule.scheme" => self.scheme = value.trim().parse().map_err(|_| bad(k, value))?,
            "schedule.pre_first_density_iterations" => s.pre_first_density_iterations = num(k, value)?,
            "schedule.pre_density_iterations" => s.pre_density_iterations = num(k, value)?,
            "schedule.pre_first_velocity_iterations" => s.pre_first_velocity_iterations = num(k, value)?,
            "schedule.pre_first_ms_interval" => s.pre_first_ms_interval = num(k, value)?,
            "schedule.pre_first_ms_steps" => s.pre_first_ms_steps = num(k, value)?,
            "schedule.pre_velocity_iterations" => s.pre_velocity_iterations = num(k, value)?,
            "schedule.iterations" => s.iterations = num(k, value)?,
            "schedule.ms_interval" => s.ms_interval = num(k, value)?,
            "schedule.ms_steps" => s.ms_steps = num(k, value)?,
            "schedule.growth" => s.growth = num(k, value)?,
            "schedule.lr_density_first" => s.lr_density_first = num(k, value)?,
            "schedule.lr_density_pre" => s.lr_density_pre = parse_ramp(k, value)?,
            "schedule.lr_density" => s.lr_density = num(k, value)?,
            "schedule.lr_velocity_first" => s.lr_velocity_first = num(k, value)?,
            "schedule.lr_velocity_pre" => s.lr_velocity_pre = num(k, value)?,
            "schedule.lr_velocity" => s.lr_velocity = parse_ramp(k, value)?,
            "schedule.density_init" => s.density_init = num(k, value)?,
            "schedule.velocity_init" => s.velocity_init = num(k, value)?,
            "schedule.inflow_overlap" => s.inflow_overlap = num(k, value)?,
            "render.step_size" => r.step_size = num(k, value)?,
            "render.shadow_step_size" => r.shadow_step_size = num(k, value)?,
            "render.gradient_mode" => r.gradient_mode = value.trim().parse()?,
            "render.background" => {
                let c: std::result::Result<Vec<f64>, _> = value.split_whitespace().map(str::parse).collect();
                match c {
                    Ok(c) if !c.is_empty() => r.background = Background::Constant(c),
                    _ => return Err(bad(k, value)),
                }
            }
            "disc.learning_rate" => d.learning_rate = num(k, value)?,
            "disc.l2_weight" => d.l2_weight = num(k, value)?,
            "disc.real_batch" => d.real_batch = num(k, value)?,
            "disc.fake_batch" => d.fake_batch = num(k, value)?,
            "disc.history_batch" => d.history_batch = num(k, value)?,
            "disc.history_capacity" => d.history_capacity = num(k, value)?,
            "disc.crop" => d.augment.crop = pair(k, value)?,
            "disc.scale" => d.augment.scale = pair(k, value)?,
            "disc.rotation_deg" => d.augment.rotation_deg = num(k, value)?,
            "disc.intensity" => d.augment.intensity = pair(k, value)?,
            "disc.gamma" => d.augment.gamma = pair(k, value)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key '{k}'"))),
        }
        Ok(())
    }

    /// Sets a field from `section.key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("expected section.key=value, got '{assignment}'")))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::InvalidInput(format!("expected section.key, got '{}'", lhs.trim())))?;
        self.set(section, key, value.trim())
    }

    /// Applies every assignment of an INI text on top of `self`.
    pub fn apply_ini(&mut self, text: &str, path: &Path) -> Result<()> {
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::format(path, format!("line {}: unknown section [{name}]", n + 1)));
                }
                section = Some(name.to_string());
                continue;
            }
            let sec = section
                .as_deref()
                .ok_or_else(|| Error::format(path, format!("line {}: assignment outside a section", n + 1)))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", n + 1)))?;
            self.set(sec, key.trim(), value.trim())
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_ini(&text, path)
    }

    /// Every settable field as `section.key` pairs.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let (w, p, s, r, d) = (&self.weights, &self.pre_weights, &self.schedule, &self.render, &self.disc);
        let pair = |v: (f64, f64)| format!("{} {}", v.0, v.1);
        kv.set("weights.target", w.target);
        kv.set("weights.warp_dens", format_ramp(&w.warp_dens));
        kv.set("weights.disc", w.disc);
        kv.set("weights.vel_warp_dens", w.vel_warp_dens);
        kv.set("weights.warp_vel", format_ramp(&w.warp_vel));
        kv.set("weights.div", format_ramp(&w.div));
        kv.set("weights.lambda_rho_a", w.lambda_rho_a);
        kv.set("weights.lambda_u_a", w.lambda_u_a);
        kv.set("weights.beta_ema", w.beta_ema);
        kv.set("weights.pre_target", p.target);
        kv.set("weights.pre_vel_warp_dens", p.vel_warp_dens);
        kv.set("weights.pre_div_first", format_ramp(&p.div_first));
        kv.set("weights.pre_div", p.div);
        kv.set("weights.rescale", self.rescale_weights);
        kv.set("schedule.seed", self.seed);
        kv.set("schedule.scheme", scheme_name(self.scheme));
        kv.set("schedule.pre_first_density_iterations", s.pre_first_density_iterations);
        kv.set("schedule.pre_density_iterations", s.pre_density_iterations);
        kv.set("schedule.pre_first_velocity_iterations", s.pre_first_velocity_iterations);
        kv.set("schedule.pre_first_ms_interval", s.pre_first_ms_interval);
        kv.set("schedule.pre_first_ms_steps", s.pre_first_ms_steps);
        kv.set("schedule.pre_velocity_iterations", s.pre_velocity_iterations);
        kv.set("schedule.iterations", s.iterations);
        kv.set("schedule.ms_interval", s.ms_interval);
        kv.set("schedule.ms_steps", s.ms_steps);
        kv.set("schedule.growth", s.growth);
        kv.set("schedule.lr_density_first", s.lr_density_first);
        kv.set("schedule.lr_density_pre", format_ramp(&s.lr_density_pre));
        kv.set("schedule.lr_density", s.lr_density);
        kv.set("schedule.lr_velocity_first", s.lr_velocity_first);
        kv.set("schedule.lr_velocity_pre", s.lr_velocity_pre);
        kv.set("schedule.lr_velocity", format_ramp(&s.lr_velocity));
        kv.set("schedule.density_init", s.density_init);
        kv.set("schedule.velocity_init", s.velocity_init);
        kv.set("schedule.inflow_overlap", s.inflow_overlap);
        kv.set("render.step_size", r.step_size);
        kv.set("render.shadow_step_size", r.shadow_step_size);
        kv.set(
            "render.gradient_mode",
            match r.gradient_mode {
                crate::render::GradientMode::Exact => "exact",
                crate::render::GradientMode::Normalized => "normalized",
            },
        );
        if let Background::Constant(c) = &r.background {
            kv.set("render.background", c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        }
        kv.set("disc.learning_rate", d.learning_rate);
        kv.set("disc.l2_weight", d.l2_weight);
        kv.set("disc.real_batch", d.real_batch);
        kv.set("disc.fake_batch", d.fake_batch);
        kv.set("disc.history_batch", d.history_batch);
        kv.set("disc.history_capacity", d.history_capacity);
        kv.set("disc.crop", pair(d.augment.crop));
        kv.set("disc.scale", pair(d.augment.scale));
        kv.set("disc.rotation_deg", d.augment.rotation_deg);
        kv.set("disc.intensity", pair(d.augment.intensity));
        kv.set("disc.gamma", pair(d.augment.gamma));
        kv
    }

    /// Inverse of [`ReconConfig::to_key_values`] over the defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = ReconConfig::default();
        for (k, v) in kv.iter() {
            if let Some((section, key)) = k.split_once('.') {
                if SECTIONS.contains(&section) {
                    c.set(section, key, v)?;
                }
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramps_parse_and_format() {
        for r in [Ramp::constant(2.5), Ramp::linear(1.0, 3.0), Ramp::exponential(2.6e-9, 1.7e-8)] {
            assert_eq!(parse_ramp("k", &format_ramp(&r)).unwrap(), r);
        }
        assert!(parse_ramp("k", "cubic 1 2").is_err());
    }

    #[test]
    fn file_then_flags_override_defaults() {
        let mut c = ReconConfig::default();
        let text = "# run\n[schedule]\nseed = 3\niterations = 7\n[weights]\ndiv = exp 1e-9 2e-9\n";
        c.apply_ini(text, Path::new("cfg.ini")).unwrap();
        c.set_assignment("schedule.seed=5").unwrap();
        let d = ReconConfig::default();
        assert_eq!(c.seed, 5);
        assert_eq!(c.schedule.iterations, 7);
        assert_eq!(c.weights.div, Ramp::exponential(1e-9, 2e-9));
        assert_eq!(c.weights.target, d.weights.target);
        assert_eq!(c.schedule.ms_steps, d.schedule.ms_steps);
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let mut c = ReconConfig::default();
        assert!(c.apply_ini("[weights]\nfoo = 1\n", Path::new("x")).is_err());
        assert!(c.apply_ini("[network]\n", Path::new("x")).is_err());
        assert!(c.apply_ini("seed = 1\n", Path::new("x")).is_err());
        assert!(c.set_assignment("schedule.iterations=-1").is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let mut c = ReconConfig::default();
        c.seed = 11;
        c.weights.beta_ema = 0.5;
        c.scheme = AdvectionScheme::SemiLagrangian;
        let back = ReconConfig::from_key_values(&c.to_key_values()).unwrap();
        assert_eq!(back, c);
    }
}
