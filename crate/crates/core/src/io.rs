//! On-disk formats: GTVF volumes, PFM/PPM images and `key = value` text.
//!
//! GTVF layout: magic `GTVF`, little-endian u32 `{version = 1, channels, nx,
//! ny, nz}`, 3 x f32 origin, f32 cell size, then `channels * nx * ny * nz`
//! little-endian f32 values, x-fastest with channels interleaved per cell.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Dims, GridGeom, ScalarGrid, VectorGrid};
use crate::image::Image;
use crate::math::Vec3;

const GTVF_MAGIC: &[u8; 4] = b"GTVF";
const GTVF_VERSION: u32 = 1;
const GTVF_HEADER: usize = 4 + 5 * 4 + 4 * 4;

pub fn encode_gtvf(geom: &GridGeom, channels: u32, values: &[f64]) -> Vec<u8> {
    let d = geom.dims;
    let mut buf = Vec::with_capacity(GTVF_HEADER + 4 * values.len());
    buf.extend_from_slice(GTVF_MAGIC);
    for v in [GTVF_VERSION, channels, d.nx as u32, d.ny as u32, d.nz as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [geom.origin.x, geom.origin.y, geom.origin.z, geom.cell_size] {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_gtvf(bytes: &[u8], path: &Path) -> Result<(GridGeom, u32, Vec<f64>)> {
    if bytes.len() < GTVF_HEADER || &bytes[..4] != GTVF_MAGIC {
        return Err(Error::format(path, "missing GTVF header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let version = u32_at(4);
    if version != GTVF_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let channels = u32_at(8);
    let dims = Dims::new(u32_at(12) as usize, u32_at(16) as usize, u32_at(20) as usize);
    if dims.is_empty() || channels == 0 {
        return Err(Error::format(path, "empty volume"));
    }
    let origin = Vec3::new(f32_at(24), f32_at(28), f32_at(32));
    let cell_size = f32_at(36);
    let count = channels as usize * dims.len();
    if bytes.len() != GTVF_HEADER + 4 * count {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", 4 * count, bytes.len() - GTVF_HEADER),
        ));
    }
    let values = (0..count).map(|i| f32_at(GTVF_HEADER + 4 * i)).collect();
    Ok((GridGeom::new(dims, origin, cell_size), channels, values))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_scalar(path: &Path, grid: &ScalarGrid) -> Result<()> {
    write_bytes(path, &encode_gtvf(grid.geom(), 1, grid.data()))
}

pub fn write_vector(path: &Path, grid: &VectorGrid) -> Result<()> {
    write_bytes(path, &encode_gtvf(grid.geom(), 3, &grid.as_flat()))
}

pub fn read_scalar(path: &Path) -> Result<ScalarGrid> {
    let (geom, channels, values) = decode_gtvf(&read_bytes(path)?, path)?;
    if channels != 1 {
        return Err(Error::format(path, format!("expected 1 channel, found {channels}")));
    }
    ScalarGrid::from_data(geom, values)
}

pub fn read_vector(path: &Path) -> Result<VectorGrid> {
    let (geom, channels, values) = decode_gtvf(&read_bytes(path)?, path)?;
    if channels != 3 {
        return Err(Error::format(path, format!("expected 3 channels, found {channels}")));
    }
    let mut grid = VectorGrid::zeros(geom);
    grid.set_flat(&values);
    Ok(grid)
}

/// Little-endian PFM; rows are stored bottom to top as the format requires.
pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let (w, h, c) = img.shape();
    assert!(c == 1 || c == 3, "PFM holds 1 or 3 channels");
    let tag = if c == 3 { "PF" } else { "Pf" };
    let mut buf = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                buf.extend_from_slice(&(img.get(x, y, ch) as f32).to_le_bytes());
            }
        }
    }
    buf
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Image> {
    let bad = |r: &str| Error::format(path, r.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(bad("unknown PFM tag")),
    };
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != 4 * w * h * channels {
        return Err(bad("PFM payload size mismatch"));
    }
    let mut img = Image::new(w, h, channels);
    let mut i = 0;
    for y in (0..h).rev() {
        for x in 0..w {
            for c in 0..channels {
                let raw: [u8; 4] = body[4 * i..4 * i + 4].try_into().unwrap();
                let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
                img.set(x, y, c, v as f64);
                i += 1;
            }
        }
    }
    Ok(img)
}

pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_pfm(img))
}

pub fn read_pfm(path: &Path) -> Result<Image> {
    decode_pfm(&read_bytes(path)?, path)
}

/// 8-bit binary PPM preview with gamma 2.2 encoding.
pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let (w, h, c) = img.shape();
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img.get(x, y, ch.min(c - 1)).clamp(0.0, 1.0).powf(1.0 / 2.2);
                buf.push((v * 255.0).round() as u8);
            }
        }
    }
    write_bytes(path, &buf)
}

/// Ordered `key = value` pairs; `#` starts a comment line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}: expected key = value", n + 1)))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_string().as_bytes())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str, path: &Path) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(path, format!("missing key `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str, path: &Path) -> Result<T> {
        self.require(key, path)?
            .parse()
            .map_err(|_| Error::format(path, format!("bad value for `{key}`")))
    }

    pub fn parse_vec3(&self, key: &str, path: &Path) -> Result<Vec3> {
        parse_vec3(self.require(key, path)?)
            .ok_or_else(|| Error::format(path, format!("bad vector for `{key}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Parses `x, y, z` (commas or whitespace).
pub fn parse_vec3(s: &str) -> Option<Vec3> {
    let parts: Vec<f64> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().ok())
        .collect::<Option<_>>()?;
    (parts.len() == 3).then(|| Vec3::new(parts[0], parts[1], parts[2]))
}

pub fn format_vec3(v: Vec3) -> String {
    format!("{}, {}, {}", v.x, v.y, v.z)
}

/// Writes rows to a CSV file with a header line.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", header.join(",")).expect("write to vec");
    for r in rows {
        writeln!(buf, "{}", r.join(",")).expect("write to vec");
    }
    write_bytes(path, &buf)
}
