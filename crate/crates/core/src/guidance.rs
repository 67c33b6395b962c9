//! Classifier-free guidance, the wavelet-band detail enhancer and
//! skip-residual mixing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::wavelet::{dwt2, idwt2, WaveletBands, WaveletFilter, WaveletKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceMode {
    /// Low band from the conditional prediction, detail bands guided by `w_d`.
    #[default]
    FrequencyGuided,
    /// Plain CFG with strength `w` over the whole signal.
    StandardCfg,
    /// Low band guided by `w_d`, detail bands conditional.
    LowBandOnly,
    /// Conditional prediction only; the unconditional call is skipped.
    ConditionalOnly,
}

impl GuidanceMode {
    pub fn needs_unconditional(self) -> bool {
        self != GuidanceMode::ConditionalOnly
    }
}

impl std::str::FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency_guided" => Ok(Self::FrequencyGuided),
            "standard_cfg" => Ok(Self::StandardCfg),
            "low_band_only" => Ok(Self::LowBandOnly),
            "conditional_only" => Ok(Self::ConditionalOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown guidance mode {other:?} (expected frequency_guided, standard_cfg, low_band_only or conditional_only)"
            ))),
        }
    }
}

/// Which latent the cosine weight `c1` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipOrientation {
    /// `c1·z_inv + (1 − c1)·z_cur`: the inverted latent dominates the first
    /// steps and fades out.
    #[default]
    Prose,
    /// `c1·z_cur + (1 − c1)·z_inv`.
    Literal,
}

impl std::str::FromStr for SkipOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prose" => Ok(Self::Prose),
            "literal" => Ok(Self::Literal),
            other => Err(Error::InvalidArgument(format!(
                "unknown skip orientation {other:?} (expected prose or literal)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub w: f32,
    pub w_d: f32,
    pub wavelet: WaveletKind,
    pub mode: GuidanceMode,
    /// Skip residuals apply to steps `i < skip_tau_index`; 0 disables them.
    pub skip_tau_index: usize,
    pub alpha: f64,
    pub skip_orientation: SkipOrientation,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            w: 7.5,
            w_d: 7.5,
            wavelet: WaveletKind::Sym4,
            mode: GuidanceMode::FrequencyGuided,
            skip_tau_index: 0,
            alpha: 3.0,
            skip_orientation: SkipOrientation::Prose,
        }
    }
}

impl GuidanceConfig {
    pub fn conditional_only() -> Self {
        Self {
            mode: GuidanceMode::ConditionalOnly,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w >= 0.0) {
            return Err(Error::InvalidArgument(format!("guidance w must be finite and >= 0, got {}", self.w)));
        }
        if !(self.w_d.is_finite() && self.w_d >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detail guidance w_d must be finite and >= 0, got {}",
                self.w_d
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be finite and > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Also checks `skip_tau_index` against a schedule length.
    pub fn validate_for(&self, step_count: usize) -> Result<()> {
        self.validate()?;
        if self.skip_tau_index > step_count {
            return Err(Error::InvalidArgument(format!(
                "skip_tau_index {} exceeds step count {step_count}",
                self.skip_tau_index
            )));
        }
        Ok(())
    }

    pub fn filter(&self) -> WaveletFilter {
        WaveletFilter::new(self.wavelet)
    }
}

/// `d_uncond + w·(d_cond − d_uncond)`.
pub fn cfg_standard(d_cond: &Field, d_uncond: &Field, w: f32) -> Result<Field> {
    d_cond.zip_map(d_uncond, "cfg_standard", |c, u| u + w * (c - u))
}

fn guide_band(c: &Field, u: &Field, w: f32) -> Result<Field> {
    c.zip_map(u, "band guidance", |c, u| u + w * (c - u))
}

fn transform_pair(d_cond: &Field, d_uncond: &Field, filter: &WaveletFilter, op: &'static str) -> Result<(WaveletBands, WaveletBands)> {
    d_cond.ensure_same_shape(d_uncond, op)?;
    Ok((dwt2(d_cond, filter)?, dwt2(d_uncond, filter)?))
}

/// Keeps the conditional low band and guides the three detail bands with
/// `cfg.w_d`.
pub fn cfg_frequency_guided(d_cond: &Field, d_uncond: &Field, cfg: &GuidanceConfig) -> Result<Field> {
    let (c, u) = transform_pair(d_cond, d_uncond, &cfg.filter(), "cfg_frequency_guided")?;
    let bands = WaveletBands {
        low: c.low.clone(),
        horizontal: guide_band(&c.horizontal, &u.horizontal, cfg.w_d)?,
        vertical: guide_band(&c.vertical, &u.vertical, cfg.w_d)?,
        diagonal: guide_band(&c.diagonal, &u.diagonal, cfg.w_d)?,
        source: c.source,
        boundary: c.boundary,
    };
    idwt2(&bands, &cfg.filter())
}

/// Guides the low band with `cfg.w_d` and keeps the conditional detail bands.
pub fn low_band_only_guidance(d_cond: &Field, d_uncond: &Field, cfg: &GuidanceConfig) -> Result<Field> {
    let (c, u) = transform_pair(d_cond, d_uncond, &cfg.filter(), "low_band_only_guidance")?;
    let bands = WaveletBands {
        low: guide_band(&c.low, &u.low, cfg.w_d)?,
        ..c
    };
    idwt2(&bands, &cfg.filter())
}

/// Combines predictions according to `cfg.mode`. `d_uncond` may be `None`
/// only in conditional-only mode.
pub fn guide(d_cond: &Field, d_uncond: Option<&Field>, cfg: &GuidanceConfig) -> Result<Field> {
    if cfg.mode == GuidanceMode::ConditionalOnly {
        if let Some(u) = d_uncond {
            d_cond.ensure_same_shape(u, "guide")?;
        }
        return Ok(d_cond.clone());
    }
    let u = d_uncond.ok_or_else(|| {
        Error::InvalidArgument(format!("guidance mode {:?} needs an unconditional prediction", cfg.mode))
    })?;
    match cfg.mode {
        GuidanceMode::FrequencyGuided => cfg_frequency_guided(d_cond, u, cfg),
        GuidanceMode::StandardCfg => cfg_standard(d_cond, u, cfg.w),
        GuidanceMode::LowBandOnly => low_band_only_guidance(d_cond, u, cfg),
        GuidanceMode::ConditionalOnly => unreachable!(),
    }
}

/// Cosine-decay weight `((1 + cos(π·i/n)) / 2)^α`.
pub fn skip_weight(i: usize, n: usize, alpha: f64) -> f64 {
    let u = i as f64 / n as f64;
    ((1.0 + (std::f64::consts::PI * u).cos()) / 2.0).powf(alpha)
}

/// Mixes the sampling latent with the stored inversion latent for step `i`
/// of `n`. Steps `i >= cfg.skip_tau_index` return `z_current` unchanged.
pub fn skip_residual_mix(z_current: &Field, z_inverted: &Field, i: usize, n: usize, cfg: &GuidanceConfig) -> Result<Field> {
    z_current.ensure_same_shape(z_inverted, "skip_residual_mix")?;
    if i >= n {
        return Err(Error::InvalidArgument(format!("step index {i} out of range for {n} steps")));
    }
    if i >= cfg.skip_tau_index {
        return Ok(z_current.clone());
    }
    let c1 = skip_weight(i, n, cfg.alpha);
    let (a, b) = match cfg.skip_orientation {
        SkipOrientation::Prose => (z_inverted, z_current),
        SkipOrientation::Literal => (z_current, z_inverted),
    };
    a.zip_map(b, "skip_residual_mix", |a, b| {
        (c1 * f64::from(a) + (1.0 - c1) * f64::from(b)) as f32
    })
}
