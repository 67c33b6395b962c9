//! Image buffers, Lanczos resampling, file I/O and the pixel↔latent adapter.

mod io;
mod lanczos;

pub use io::{load_image, save_image};
pub use lanczos::{lanczos_kernel, lanczos_resize, DEFAULT_TAPS};

use crate::denoise::Backend;
use crate::error::{Error, Result};
use crate::field::{Field, Shape};

/// Grey or RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    field: Field,
}

impl ImageBuffer {
    /// Wraps a 1- or 3-channel field, clamping values into `[0, 1]`.
    pub fn from_field(field: Field) -> Result<Self> {
        let channels = field.shape().channels;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidShape(format!(
                "images have 1 or 3 channels, got {}",
                field.shape()
            )));
        }
        let field = if field.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            field
        } else {
            field.map("clamp", |v| v.clamp(0.0, 1.0))?
        };
        Ok(Self { field })
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_field(Field::from_vec(Shape::new(channels, height, width), data)?)
    }

    pub fn as_field(&self) -> &Field {
        &self.field
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    pub fn shape(&self) -> Shape {
        self.field.shape()
    }

    pub fn channels(&self) -> usize {
        self.field.shape().channels
    }

    pub fn height(&self) -> usize {
        self.field.shape().height
    }

    pub fn width(&self) -> usize {
        self.field.shape().width
    }
}

pub fn encode_latent(image: &ImageBuffer, backend: &dyn Backend) -> Result<Field> {
    backend.encode(image)
}

pub fn decode_latent(latent: &Field, backend: &dyn Backend) -> Result<ImageBuffer> {
    backend.decode(latent)
}

/// Peak signal-to-noise ratio in dB for unit-range images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.as_field().ensure_same_shape(b.as_field(), "psnr")?;
    let n = a.as_field().data().len() as f64;
    let mse = a
        .as_field()
        .data()
        .iter()
        .zip(b.as_field().data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}
