//! Dense `channels × height × width` float fields.
//!
//! A [`Field`] carries images, latents, noise and denoiser predictions. Data
//! is stored channel-major, then row-major, as `f32`. Every constructor and
//! arithmetic operation rejects non-finite results, so a `Field` in hand is
//! always finite.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidShape(format!(
                "all dimensions must be positive, got {self}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: Shape,
    data: Vec<f32>,
}

impl Field {
    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        let field = Self { shape, data };
        field.ensure_finite("from_vec")?;
        Ok(field)
    }

    pub fn zeros(shape: Shape) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f32) -> Result<Self> {
        shape.validate()?;
        if !value.is_finite() {
            return Err(Error::NonFinite { op: "filled" });
        }
        Ok(Self {
            shape,
            data: vec![value; shape.len()],
        })
    }

    /// Builds a field by evaluating `f(c, y, x)` at every position.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        shape.validate()?;
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_vec(shape, data)
    }

    /// Stacks equally sized single-channel planes into one field.
    pub fn from_planes(height: usize, width: usize, planes: Vec<Vec<f32>>) -> Result<Self> {
        let shape = Shape::new(planes.len(), height, width);
        let mut data = Vec::with_capacity(shape.len());
        for plane in planes {
            if plane.len() != height * width {
                return Err(Error::InvalidShape(format!(
                    "plane of {} values does not match {height}x{width}",
                    plane.len()
                )));
            }
            data.extend(plane);
        }
        Self::from_vec(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.shape.plane())
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    /// Elementwise map. Fails if `f` produces a non-finite value.
    pub fn map(&self, op: &'static str, f: impl Fn(f32) -> f32) -> Result<Field> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        let out = Field {
            shape: self.shape,
            data,
        };
        out.ensure_finite(op)?;
        Ok(out)
    }

    /// Elementwise combination of two equally shaped fields.
    pub fn zip_map(
        &self,
        other: &Field,
        op: &'static str,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<Field> {
        self.ensure_same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let out = Field {
            shape: self.shape,
            data,
        };
        out.ensure_finite(op)?;
        Ok(out)
    }

    pub fn scale(&self, s: f32) -> Result<Field> {
        self.map("scale", |v| v * s)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn ensure_same_shape(&self, other: &Field, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f32> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    /// Sum of squares, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// SHA-256 of the file encoding (header and payload), lowercase hex.
    pub fn sha256_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(MAGIC);
        for d in [self.shape.channels, self.shape.height, self.shape.width] {
            h.update((d as u32).to_le_bytes());
        }
        for v in &self.data {
            h.update(v.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }
}

/// Returns `a·x + y` elementwise.
pub fn axpy(a: f32, x: &Field, y: &Field) -> Result<Field> {
    x.zip_map(y, "axpy", |xv, yv| (f64::from(a) * f64::from(xv) + f64::from(yv)) as f32)
}

const MAGIC: &[u8; 8] = b"FLDF0001";

/// Writes `f` as `FLDF0001`, three little-endian u32 dimensions
/// (channels, height, width), then the raw little-endian f32 payload.
pub fn save_field(f: &Field, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for dim in [f.shape.channels, f.shape.height, f.shape.width] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in &f.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_field(&bytes).map_err(|reason| Error::format(path, reason))
}

pub(crate) fn decode_field(bytes: &[u8]) -> std::result::Result<Field, String> {
    const HEADER: usize = 8 + 3 * 4;
    if bytes.len() < HEADER {
        return Err(format!("file too short for header ({} bytes)", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic, expected FLDF0001".into());
    }
    let dim = |i: usize| {
        let off = 8 + 4 * i;
        u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
    };
    let shape = Shape::new(dim(0), dim(1), dim(2));
    let payload = &bytes[HEADER..];
    let expected = shape
        .channels
        .checked_mul(shape.height)
        .and_then(|n| n.checked_mul(shape.width))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format!("shape {shape} overflows"))?;
    if payload.len() != expected {
        return Err(format!(
            "shape {shape} needs {expected} payload bytes, found {}",
            payload.len()
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Field::from_vec(shape, data).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_field, Rng};
    use proptest::prelude::*;

    fn f(values: &[f32]) -> Field {
        Field::from_vec(Shape::new(1, 1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn axpy_examples() {
        let y = f(&[3.0, 4.0]);
        let x = f(&[1.0, 2.0]);
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(axpy(1.0, &x, &f(&[0.0, 0.0])).unwrap(), x);
        assert_eq!(axpy(2.0, &x, &y).unwrap().data(), &[5.0, 8.0]);
    }

    #[test]
    fn axpy_shape_mismatch_names_both_shapes() {
        let err = axpy(1.0, &f(&[1.0, 2.0]), &f(&[1.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x1x2") && msg.contains("1x1x1"), "{msg}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Field::from_vec(Shape::new(1, 1, 1), vec![f32::NAN]).is_err());
        let big = f(&[f32::MAX]);
        assert!(matches!(
            axpy(2.0, &big, &big),
            Err(Error::NonFinite { op: "axpy" })
        ));
    }

    #[test]
    fn rejects_empty_shape() {
        assert!(Field::zeros(Shape::new(0, 2, 2)).is_err());
        assert!(Field::from_vec(Shape::new(1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fld");
        let x = gaussian_field(&mut Rng::new(3), Shape::new(3, 5, 7)).unwrap();
        save_field(&x, &path).unwrap();
        let y = load_field(&path).unwrap();
        assert_eq!(x.shape(), y.shape());
        assert!(x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fld");
        save_field(&f(&[1.0, -2.5]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut expected = b"FLDF0001".to_vec();
        for d in [1u32, 1, 2] {
            expected.extend(d.to_le_bytes());
        }
        expected.extend(1.0f32.to_le_bytes());
        expected.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.fld");
        save_field(&f(&[1.0, 2.0, 3.0]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_field(&path), Err(Error::Format { .. })));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_field(&path), Err(Error::Format { .. })));

        std::fs::write(&path, &bytes[..10]).unwrap();
        assert!(load_field(&path).is_err());
    }

    #[test]
    fn empty_path_is_io_error() {
        assert!(matches!(load_field(""), Err(Error::Io { .. })));
        assert!(matches!(save_field(&f(&[1.0]), ""), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn axpy_is_additive_in_coefficient(
            a in -4.0f32..4.0,
            b in -4.0f32..4.0,
            xs in prop::collection::vec(-10.0f32..10.0, 1..32),
            seed in any::<u64>(),
        ) {
            let n = xs.len();
            let x = f(&xs);
            let y = gaussian_field(&mut Rng::new(seed), Shape::new(1, 1, n)).unwrap();
            let lhs = axpy(a, &x, &axpy(b, &x, &y).unwrap()).unwrap();
            let rhs = axpy(a + b, &x, &y).unwrap();
            for (i, xi) in xs.iter().enumerate() {
                let scale = (a.abs() + b.abs()) * xi.abs() + y.data()[i].abs();
                prop_assert!((lhs.data()[i] - rhs.data()[i]).abs() <= 1e-6 * scale.max(f32::MIN_POSITIVE));
            }
        }
    }
}
