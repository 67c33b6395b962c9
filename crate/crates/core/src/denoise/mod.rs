//! Denoiser backends.
//!
//! A backend estimates `E[x | z_σ]` (or `E[x | z_σ, y]` with a condition)
//! and owns the pixel↔latent mapping. Two implementations ship with the
//! engine: [`AnalyticBackend`], a closed-form Gaussian-mixture posterior,
//! and [`RemoteBackend`], a client for the HTTP denoiser protocol.

mod analytic;
mod gmm;
pub mod protocol;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use analytic::{AnalyticBackend, DESK_COMPONENTS, DESK_RESOLUTION, DESK_STD};
pub use gmm::{gmm_posterior_mean, GaussianMixture, GmmComponent, MEAN_AMPLITUDE};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::imaging::ImageBuffer;

/// Opaque conditioning label. The analytic backend reads it as a mixture
/// component index; a remote service treats it as a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Condition(String);

impl Condition {
    pub fn new(label: impl Into<String>) -> Self {
        Self(label.into())
    }

    pub fn component(index: usize) -> Self {
        Self(index.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub latent: &'a Field,
    pub sigma: f64,
    /// `None` requests the unconditional prediction.
    pub condition: Option<&'a Condition>,
}

impl<'a> DenoiseRequest<'a> {
    pub fn new(latent: &'a Field, sigma: f64, condition: Option<&'a Condition>) -> Self {
        Self {
            latent,
            sigma,
            condition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseRequest {
    pub prompt: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

/// Identifies a backend in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    Analytic {
        components: usize,
        latent_shape: Shape,
        mixture_hash: String,
    },
    Remote {
        url: String,
        native_resolution: usize,
        latent_channels: usize,
    },
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// Posterior-mean prediction for one latent.
    fn denoise(&self, req: &DenoiseRequest<'_>) -> Result<Field>;

    fn encode(&self, image: &ImageBuffer) -> Result<Field>;

    fn decode(&self, latent: &Field) -> Result<ImageBuffer>;

    /// Native generation resolution in pixels, `(height, width)`.
    fn native_resolution(&self) -> (usize, usize);

    /// Latent shape of a native-resolution image, when the engine samples
    /// base images itself.
    fn native_latent_shape(&self) -> Option<Shape> {
        None
    }

    /// Base-image generation delegated to the backend. `None` means the
    /// engine samples the base image itself.
    fn generate_base(&self, _req: &BaseRequest) -> Option<Result<ImageBuffer>> {
        None
    }
}

/// Validates the request, calls the backend and checks the reply's shape.
pub fn denoise(backend: &dyn Backend, req: &DenoiseRequest<'_>) -> Result<Field> {
    if !(req.sigma.is_finite() && req.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "denoise sigma must be finite and >= 0, got {}",
            req.sigma
        )));
    }
    let out = backend.denoise(req)?;
    if out.shape() != req.latent.shape() {
        return Err(Error::Protocol(format!(
            "backend returned {} for a {} latent",
            out.shape(),
            req.latent.shape()
        )));
    }
    Ok(out)
}
