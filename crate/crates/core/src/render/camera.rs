use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{format_vec3, KeyValues};
use crate::math::Vec3;

/// Calibrated pinhole view. `near` and `far` are depths along the view axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

/// Orthonormal camera frame.
#[derive(Clone, Copy, Debug)]
pub struct CameraBasis {
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub tan_half_y: f64,
    pub tan_half_x: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let dir = self.look_at - self.position;
        if !(self.near < self.far) || self.near < 0.0 {
            return Err(Error::InvalidInput(format!(
                "camera needs 0 <= near < far, got {} / {}",
                self.near, self.far
            )));
        }
        if !(self.fov_y > 0.0 && self.fov_y < 180.0) {
            return Err(Error::InvalidInput(format!("fov_y {} outside (0, 180)", self.fov_y)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera resolution must be positive".into()));
        }
        if dir.norm() == 0.0 || dir.normalized().cross(self.up.normalized()).norm() < 1e-9 {
            return Err(Error::InvalidInput("camera up is parallel to the view direction".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> CameraBasis {
        let forward = (self.look_at - self.position).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half_y = (0.5 * self.fov_y.to_radians()).tan();
        let tan_half_x = tan_half_y * self.width as f64 / self.height as f64;
        CameraBasis {
            forward,
            right,
            up,
            tan_half_y,
            tan_half_x,
        }
    }

    /// Unit direction through continuous pixel coordinates (pixel centers at
    /// `x + 0.5`, `y` growing downwards).
    pub fn ray_dir(&self, basis: &CameraBasis, px: f64, py: f64) -> Vec3 {
        let sx = (2.0 * px / self.width as f64 - 1.0) * basis.tan_half_x;
        let sy = (1.0 - 2.0 * py / self.height as f64) * basis.tan_half_y;
        (basis.forward + basis.right * sx + basis.up * sy).normalized()
    }

    /// Continuous pixel coordinates and view depth of a world point; `None`
    /// behind the camera.
    pub fn project(&self, basis: &CameraBasis, p: Vec3) -> Option<(f64, f64, f64)> {
        let d = p - self.position;
        let z = d.dot(basis.forward);
        if z <= 1e-12 {
            return None;
        }
        let x = d.dot(basis.right) / z;
        let y = d.dot(basis.up) / z;
        let px = (x / basis.tan_half_x + 1.0) * 0.5 * self.width as f64;
        let py = (1.0 - y / basis.tan_half_y) * 0.5 * self.height as f64;
        Some((px, py, z))
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Camera {
        Camera {
            width,
            height,
            ..self.clone()
        }
    }

    /// Camera rotated by `angle` radians about the vertical axis through
    /// `pivot`.
    pub fn rotated_about_y(&self, pivot: Vec3, angle: f64) -> Camera {
        Camera {
            position: pivot + (self.position - pivot).rotate_y(angle),
            look_at: pivot + (self.look_at - pivot).rotate_y(angle),
            up: self.up.rotate_y(angle),
            ..self.clone()
        }
    }

    /// Camera on a circle around `target` at the given azimuth (degrees,
    /// measured from +z towards +x) and elevation.
    pub fn orbit(target: Vec3, distance: f64, azimuth_deg: f64, elevation_deg: f64, fov_y: f64, width: usize, height: usize) -> Camera {
        let az = azimuth_deg.to_radians();
        let el = elevation_deg.to_radians();
        let offset = Vec3::new(az.sin() * el.cos(), el.sin(), az.cos() * el.cos()) * distance;
        Camera {
            position: target + offset,
            look_at: target,
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_y,
            width,
            height,
            near: 0.01 * distance,
            far: 4.0 * distance,
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("position", format_vec3(self.position));
        kv.set("look_at", format_vec3(self.look_at));
        kv.set("up", format_vec3(self.up));
        kv.set("fov_y", self.fov_y);
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("near", self.near);
        kv.set("far", self.far);
        kv
    }

    pub fn from_key_values(kv: &KeyValues, path: &Path) -> Result<Camera> {
        let cam = Camera {
            position: kv.parse_vec3("position", path)?,
            look_at: kv.parse_vec3("look_at", path)?,
            up: kv.parse_vec3("up", path)?,
            fov_y: kv.parse_value("fov_y", path)?,
            width: kv.parse_value("width", path)?,
            height: kv.parse_value("height", path)?,
            near: kv.parse_value("near", path)?,
            far: kv.parse_value("far", path)?,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn read(path: &Path) -> Result<Camera> {
        Self::from_key_values(&KeyValues::read(path)?, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_key_values().write(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::orbit(Vec3::new(0.5, 0.5, 0.5), 2.0, 30.0, 10.0, 40.0, 32, 24)
    }

    #[test]
    fn projection_inverts_ray_direction() {
        let c = cam();
        let b = c.basis();
        for (px, py) in [(0.5, 0.5), (16.0, 12.0), (31.5, 3.25)] {
            let p = c.position + c.ray_dir(&b, px, py) * 1.7;
            let (qx, qy, _) = c.project(&b, p).unwrap();
            assert!((qx - px).abs() < 1e-9 && (qy - py).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_cameras_are_rejected() {
        let mut c = cam();
        c.near = 5.0;
        c.far = 1.0;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.up = c.look_at - c.position;
        assert!(c.validate().is_err());
        let mut c = cam();
        c.fov_y = 180.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn key_value_roundtrip() {
        let c = cam();
        let back = Camera::from_key_values(&c.to_key_values(), Path::new("cam")).unwrap();
        assert_eq!(back, c);
    }
}
