//! CT volume model and the VOL file format.
//!
//! A VOL file is an ASCII header followed immediately by the raw voxel payload:
//!
//! ```text
//! VOL1
//! DIMS nx ny nz
//! SPACING sx sy sz
//! ORIGIN ox oy oz
//! DTYPE int16le
//! DATA
//! <nx*ny*nz little-endian i16, x fastest>
//! ```
//!
//! No trailing bytes are permitted after the payload.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Hounsfield value of air, used as a conventional fill value.
pub const HU_AIR: i16 = -1024;

/// Dense 3D grid of Hounsfield units with physical geometry.
///
/// World position of voxel `(i, j, k)` is `origin + (i*sx, j*sy, k*sz)`: voxel centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    voxels: Vec<i16>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], voxels: Vec<i16>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Precondition(format!("dims must be positive, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Precondition(format!(
                "spacing must be finite and > 0, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Precondition(format!("origin must be finite, got {origin:?}")));
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::Precondition("voxel count overflows".into()))?;
        if voxels.len() != expected {
            return Err(Error::Precondition(format!(
                "voxel count {} does not match dims {:?} ({} expected)",
                voxels.len(),
                dims,
                expected
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            voxels,
        })
    }

    /// Volume filled with a single value.
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], value: i16) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, origin, vec![value; n])
    }

    /// Builds a volume by evaluating `f` at every voxel's world-center coordinate.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        mut f: impl FnMut(Vector3<f64>) -> i16,
    ) -> Result<Self> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    voxels.push(f(Vector3::new(
                        origin[0] + i as f64 * spacing[0],
                        origin[1] + j as f64 * spacing[1],
                        origin[2] + k as f64 * spacing[2],
                    )));
                }
            }
        }
        Self::new(dims, spacing, origin, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// Physical volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> i16 {
        self.voxels[self.linear_index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: i16) {
        let idx = self.linear_index(i, j, k);
        self.voxels[idx] = value;
    }

    /// World (mm) coordinate of the voxel center at `(i, j, k)`.
    #[inline]
    pub fn world(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    /// Same volume with a shifted origin.
    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    /// Minimum and maximum HU in the volume.
    pub fn value_range(&self) -> (i16, i16) {
        self.voxels
            .iter()
            .fold((i16::MAX, i16::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = format!(
            "VOL1\nDIMS {} {} {}\nSPACING {} {} {}\nORIGIN {} {} {}\nDTYPE int16le\nDATA\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.spacing[0],
            self.spacing[1],
            self.spacing[2],
            self.origin[0],
            self.origin[1],
            self.origin[2],
        );
        let mut out = Vec::with_capacity(header.len() + 2 * self.voxels.len());
        out.extend_from_slice(header.as_bytes());
        for v in &self.voxels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut next_line = |line_no: usize| -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::format(line_no, "unexpected end of header"))?;
            let line = std::str::from_utf8(&rest[..end])
                .map_err(|_| Error::format(line_no, "header is not ASCII"))?;
            pos += end + 1;
            Ok(line)
        };

        let magic = next_line(1)?;
        if magic != "VOL1" {
            return Err(Error::format(1, format!("expected `VOL1`, got `{magic}`")));
        }
        let dims = parse_fields::<usize>(next_line(2)?, "DIMS", 2)?;
        let spacing = parse_fields::<f64>(next_line(3)?, "SPACING", 3)?;
        let origin = parse_fields::<f64>(next_line(4)?, "ORIGIN", 4)?;
        let dtype = next_line(5)?;
        if dtype != "DTYPE int16le" {
            return Err(Error::format(5, format!("expected `DTYPE int16le`, got `{dtype}`")));
        }
        let data = next_line(6)?;
        if data != "DATA" {
            return Err(Error::format(6, format!("expected `DATA`, got `{data}`")));
        }

        if dims.contains(&0) {
            return Err(Error::format(2, "dims must be positive"));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::format(3, "spacing must be finite and > 0"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::format(4, "origin must be finite"));
        }

        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::format(2, "voxel count overflows"))?;
        let payload = &bytes[pos..];
        let expected = count * 2;
        if payload.len() != expected {
            return Err(Error::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        let voxels = payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]))
            .collect();
        Self::new(dims, spacing, origin, voxels)
    }
}

fn parse_fields<T: std::str::FromStr + Copy + Default>(line: &str, tag: &str, line_no: usize) -> Result<[T; 3]> {
    let mut parts = line.split(' ');
    if parts.next() != Some(tag) {
        return Err(Error::format(line_no, format!("expected `{tag} a b c`, got `{line}`")));
    }
    let mut out = [T::default(); 3];
    for slot in out.iter_mut() {
        let field = parts
            .next()
            .ok_or_else(|| Error::format(line_no, format!("`{tag}` needs 3 values")))?;
        *slot = field
            .parse()
            .map_err(|_| Error::format(line_no, format!("invalid {tag} value `{field}`")))?;
    }
    if parts.next().is_some() {
        return Err(Error::format(line_no, format!("`{tag}` has more than 3 values")));
    }
    Ok(out)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Volume::from_bytes(&bytes)
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&volume.to_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}
