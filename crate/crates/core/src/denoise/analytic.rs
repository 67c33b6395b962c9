use crate::denoise::{Backend, BackendDescriptor, DenoiseRequest, GaussianMixture};
use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::imaging::ImageBuffer;

/// Exact posterior-mean denoiser for a Gaussian-mixture prior.
///
/// Latents are pixel fields mapped affinely to `[-1, 1]` (`z = 2x − 1`).
/// Conditions are component indices written in decimal.
#[derive(Debug, Clone)]
pub struct AnalyticBackend {
    gmm: GaussianMixture,
}

/// Native resolution and component count of [`AnalyticBackend::desk`].
pub const DESK_RESOLUTION: usize = 64;
pub const DESK_COMPONENTS: usize = 4;
pub const DESK_STD: f64 = 0.1;

impl AnalyticBackend {
    pub fn new(gmm: GaussianMixture) -> Self {
        Self { gmm }
    }

    /// Default desk-scale prior: four smooth RGB patterns at 64×64.
    pub fn desk(seed: u64) -> Result<Self> {
        let shape = Shape::new(3, DESK_RESOLUTION, DESK_RESOLUTION);
        Ok(Self::new(GaussianMixture::synthetic(
            shape,
            DESK_COMPONENTS,
            DESK_STD,
            seed,
        )?))
    }

    pub fn mixture(&self) -> &GaussianMixture {
        &self.gmm
    }

    fn parse_condition(&self, req: &DenoiseRequest<'_>) -> Result<Option<usize>> {
        req.condition
            .map(|c| {
                c.as_str()
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&i| i < self.gmm.len())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "analytic condition must be a component index below {}, got {:?}",
                            self.gmm.len(),
                            c.as_str()
                        ))
                    })
            })
            .transpose()
    }
}

impl Backend for AnalyticBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::Analytic {
            components: self.gmm.len(),
            latent_shape: self.gmm.shape(),
            mixture_hash: self.gmm.content_hash(),
        }
    }

    fn denoise(&self, req: &DenoiseRequest<'_>) -> Result<Field> {
        let condition = self.parse_condition(req)?;
        self.gmm.posterior_mean(req.latent, req.sigma, condition)
    }

    fn encode(&self, image: &ImageBuffer) -> Result<Field> {
        image.as_field().map("encode", |v| 2.0 * v - 1.0)
    }

    fn decode(&self, latent: &Field) -> Result<ImageBuffer> {
        ImageBuffer::from_field(latent.map("decode", |v| (v + 1.0) * 0.5)?)
    }

    fn native_resolution(&self) -> (usize, usize) {
        let s = self.gmm.shape();
        (s.height, s.width)
    }

    fn native_latent_shape(&self) -> Option<Shape> {
        Some(self.gmm.shape())
    }
}
