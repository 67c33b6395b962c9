use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Field, Shape};
use crate::rng::Rng;

/// Peak latent magnitude of [`GaussianMixture::synthetic`] means; about
/// natural-image contrast after decoding.
pub const MEAN_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Field,
    /// Isotropic standard deviation.
    pub std: f64,
}

/// Isotropic Gaussian mixture over fields of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    components: Vec<GmmComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "component {i}: weight must be positive, got {}",
                    c.weight
                )));
            }
            if !(c.std.is_finite() && c.std > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "component {i}: std must be positive, got {}",
                    c.std
                )));
            }
            c.mean.ensure_same_shape(&first.mean, "GaussianMixture::new")?;
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    /// Deterministic mixture of smooth colour patterns, used as the default
    /// analytic prior. Means are sums of random low-frequency plane waves
    /// squashed by `tanh` and scaled by [`MEAN_AMPLITUDE`], so decoded pixels
    /// stay inside `(0.25, 0.75)`.
    pub fn synthetic(shape: Shape, count: usize, std: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let mut rng = Rng::new(seed);
        let mut components = Vec::with_capacity(count);
        for _ in 0..count {
            let waves: Vec<[f64; 5]> = (0..shape.channels * 6)
                .map(|i| {
                    // Two coarse waves per channel get most of the amplitude.
                    let coarse = i % 6 < 2;
                    let max_freq = if coarse { 2.0 } else { 5.0 };
                    let amp = if coarse { 0.8 } else { 0.25 };
                    let fy = (rng.uniform() * 2.0 - 1.0) * max_freq;
                    let fx = (rng.uniform() * 2.0 - 1.0) * max_freq;
                    let phase = rng.uniform() * std::f64::consts::TAU;
                    let a = amp * (0.5 + 0.5 * rng.uniform());
                    let offset = if i % 6 == 0 { rng.uniform() - 0.5 } else { 0.0 };
                    [fy, fx, phase, a, offset]
                })
                .collect();
            let mean = Field::from_fn(shape, |c, y, x| {
                let (yn, xn) = (y as f64 / shape.height as f64, x as f64 / shape.width as f64);
                let v: f64 = waves[c * 6..(c + 1) * 6]
                    .iter()
                    .map(|[fy, fx, ph, a, off]| {
                        off + a * (std::f64::consts::TAU * (fy * yn + fx * xn) + ph).cos()
                    })
                    .sum();
                (MEAN_AMPLITUDE * v.tanh()) as f32
            })?;
            components.push(GmmComponent {
                weight: 1.0 / count as f64,
                mean,
                std,
            });
        }
        // Equal weights of 1/count always sum to 1 within rounding.
        Self::new(components)
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.components[0].mean.shape()
    }

    /// Content hash over weights, stds and mean payloads.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.components {
            h.update(c.weight.to_le_bytes());
            h.update(c.std.to_le_bytes());
            for v in c.mean.data() {
                h.update(v.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    /// Posterior component probabilities `r_i ∝ π_i N(z; μ_i, (s_i² + σ²) I)`,
    /// normalized with log-sum-exp.
    pub fn responsibilities(&self, z: &Field, sigma: f64) -> Result<Vec<f64>> {
        z.ensure_same_shape(&self.components[0].mean, "responsibilities")?;
        let d = z.data().len() as f64;
        let sigma2 = sigma * sigma;
        let logits: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let var = c.std * c.std + sigma2;
                let dist2: f64 = z
                    .data()
                    .iter()
                    .zip(c.mean.data())
                    .map(|(&zv, &mv)| {
                        let diff = f64::from(zv) - f64::from(mv);
                        diff * diff
                    })
                    .sum();
                c.weight.ln() - dist2 / (2.0 * var) - 0.5 * d * (std::f64::consts::TAU * var).ln()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn posterior_mean(&self, z: &Field, sigma: f64, condition: Option<usize>) -> Result<Field> {
        gmm_posterior_mean(self, z, sigma, condition)
    }
}

/// `E[x | z]` for `z = x + σ ε` under the mixture prior.
///
/// Each component contributes its Gaussian posterior mean
/// `z + σ²/(s² + σ²) · (μ − z)`. Unconditional predictions weight these by
/// the responsibilities; a condition selects a single component.
pub fn gmm_posterior_mean(
    gmm: &GaussianMixture,
    z: &Field,
    sigma: f64,
    condition: Option<usize>,
) -> Result<Field> {
    z.ensure_same_shape(&gmm.components[0].mean, "gmm_posterior_mean")?;
    let sigma2 = sigma * sigma;
    let shrink = |c: &GmmComponent| sigma2 / (c.std * c.std + sigma2);

    let weighted: Vec<(f64, &[f32])> = match condition {
        Some(i) => {
            let c = gmm.components.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "condition {i} out of range for {} components",
                    gmm.len()
                ))
            })?;
            vec![(shrink(c), c.mean.data())]
        }
        None => gmm
            .responsibilities(z, sigma)?
            .into_iter()
            .zip(&gmm.components)
            .filter(|(r, _)| *r > 0.0)
            .map(|(r, c)| (r * shrink(c), c.mean.data()))
            .collect(),
    };

    let data = z
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &zv)| {
            let zf = f64::from(zv);
            let pull: f64 = weighted
                .iter()
                .map(|(w, mean)| w * (f64::from(mean[idx]) - zf))
                .sum();
            (zf + pull) as f32
        })
        .collect();
    Field::from_vec(z.shape(), data)
}
