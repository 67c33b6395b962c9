//! JSON wire types for the denoiser HTTP protocol.
//!
//! | endpoint             | request                        | response                    |
//! |----------------------|--------------------------------|-----------------------------|
//! | `POST /v1/denoise`   | [`DenoiseWireRequest`]         | [`DenoiseWireResponse`]     |
//! | `POST /v1/encode`    | [`ImagePayload`]               | [`LatentPayload`]           |
//! | `POST /v1/decode`    | [`LatentPayload`]              | [`ImagePayload`]            |
//! | `POST /v1/generate_base` | [`GenerateBaseRequest`]    | [`ImagePayload`]            |
//! | `GET /v1/health`     |                                | [`HealthResponse`]          |
//!
//! Float payloads are standard base64 of little-endian `f32` values in
//! channel-major, row-major order; `shape` is `[channels, height, width]`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};

pub const DENOISE: &str = "/v1/denoise";
pub const ENCODE: &str = "/v1/encode";
pub const DECODE: &str = "/v1/decode";
pub const GENERATE_BASE: &str = "/v1/generate_base";
pub const HEALTH: &str = "/v1/health";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseWireRequest {
    pub shape: [usize; 3],
    pub latent_b64: String,
    pub sigma: f64,
    pub condition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseWireResponse {
    pub prediction_b64: String,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub image_b64: String,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPayload {
    pub latent_b64: String,
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateBaseRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub native_resolution: usize,
    pub latent_channels: usize,
}

/// Error body returned with 4xx/5xx statuses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub fn shape_to_wire(shape: Shape) -> [usize; 3] {
    [shape.channels, shape.height, shape.width]
}

pub fn shape_from_wire(shape: [usize; 3]) -> Shape {
    Shape::new(shape[0], shape[1], shape[2])
}

pub fn encode_floats(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_floats(b64: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| Error::Protocol(format!("invalid base64 payload: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Protocol(format!(
            "payload of {} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

pub fn field_from_wire(b64: &str, shape: [usize; 3]) -> Result<Field> {
    let values = decode_floats(b64)?;
    Field::from_vec(shape_from_wire(shape), values).map_err(|e| Error::Protocol(e.to_string()))
}

impl DenoiseWireRequest {
    pub fn from_field(latent: &Field, sigma: f64, condition: Option<&str>) -> Self {
        Self {
            shape: shape_to_wire(latent.shape()),
            latent_b64: encode_floats(latent.data()),
            sigma,
            condition: condition.map(str::to_owned),
        }
    }

    pub fn latent(&self) -> Result<Field> {
        field_from_wire(&self.latent_b64, self.shape)
    }
}

impl DenoiseWireResponse {
    pub fn from_field(prediction: &Field) -> Self {
        Self {
            prediction_b64: encode_floats(prediction.data()),
            shape: shape_to_wire(prediction.shape()),
        }
    }

    pub fn prediction(&self) -> Result<Field> {
        field_from_wire(&self.prediction_b64, self.shape)
    }
}

impl ImagePayload {
    pub fn from_field(image: &Field) -> Self {
        Self {
            image_b64: encode_floats(image.data()),
            shape: shape_to_wire(image.shape()),
        }
    }

    pub fn field(&self) -> Result<Field> {
        field_from_wire(&self.image_b64, self.shape)
    }
}

impl LatentPayload {
    pub fn from_field(latent: &Field) -> Self {
        Self {
            latent_b64: encode_floats(latent.data()),
            shape: shape_to_wire(latent.shape()),
        }
    }

    pub fn field(&self) -> Result<Field> {
        field_from_wire(&self.latent_b64, self.shape)
    }
}
