//! Deterministic DDIM sampling and inversion of the σ-parameterized
//! probability-flow ODE, using first-order (Euler) steps in both directions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::{denoise, Backend, Condition, DenoiseRequest};
use crate::error::{Error, Result, ResultExt};
use crate::field::{load_field, save_field, Field};
use crate::guidance::{cfg_standard, guide, skip_residual_mix, GuidanceConfig};
use crate::schedule::NoiseSchedule;

/// `denoised + (σ_to/σ_from)·(z − denoised)`; returns `denoised` when
/// `σ_from = 0`. Works in either direction.
pub fn ddim_step(z: &Field, sigma_from: f64, sigma_to: f64, denoised: &Field) -> Result<Field> {
    if !(sigma_from >= 0.0 && sigma_to >= 0.0) || !sigma_from.is_finite() || !sigma_to.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ddim_step needs finite non-negative sigmas, got {sigma_from} -> {sigma_to}"
        )));
    }
    z.ensure_same_shape(denoised, "ddim_step")?;
    if sigma_from == 0.0 {
        return Ok(denoised.clone());
    }
    if sigma_to == sigma_from {
        return Ok(z.clone());
    }
    let ratio = sigma_to / sigma_from;
    z.zip_map(denoised, "ddim_step", |z, d| {
        let d = f64::from(d);
        (d + ratio * (f64::from(z) - d)) as f32
    })
}

/// The raw and combined denoiser outputs for one latent.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub conditional: Field,
    /// Absent in conditional-only mode.
    pub unconditional: Option<Field>,
    pub guided: Field,
}

/// Queries the backend (once or twice, depending on the mode) and combines
/// the predictions per `cfg`.
pub fn predict(
    backend: &dyn Backend,
    z: &Field,
    sigma: f64,
    cfg: &GuidanceConfig,
    condition: &Condition,
) -> Result<Predictions> {
    let conditional = denoise(backend, &DenoiseRequest::new(z, sigma, Some(condition)))?;
    let unconditional = if cfg.mode.needs_unconditional() {
        Some(denoise(backend, &DenoiseRequest::new(z, sigma, None))?)
    } else {
        None
    };
    let guided = guide(&conditional, unconditional.as_ref(), cfg)?;
    Ok(Predictions {
        conditional,
        unconditional,
        guided,
    })
}

/// Inversion trajectory in traversal order: `latents[0]` is the clean
/// input at `σ = 0`, the last entry is the recovered noise at `σ_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    sigmas: Vec<f64>,
    latents: Vec<Field>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryManifest {
    sigmas: Vec<f64>,
    files: Vec<String>,
}

impl TrajectoryRecord {
    pub fn new(sigmas: Vec<f64>, latents: Vec<Field>) -> Result<Self> {
        if sigmas.is_empty() || sigmas.len() != latents.len() {
            return Err(Error::InvalidArgument(format!(
                "trajectory needs one latent per sigma, got {} sigmas and {} latents",
                sigmas.len(),
                latents.len()
            )));
        }
        if sigmas[0] != 0.0 || sigmas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("trajectory sigmas must rise strictly from 0".into()));
        }
        let shape = latents[0].shape();
        if latents.iter().any(|l| l.shape() != shape) {
            return Err(Error::InvalidArgument("trajectory latents differ in shape".into()));
        }
        Ok(Self { sigmas, latents })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn latents(&self) -> &[Field] {
        &self.latents
    }

    pub fn step_count(&self) -> usize {
        self.latents.len() - 1
    }

    /// The recovered noise latent.
    pub fn final_latent(&self) -> &Field {
        self.latents.last().expect("trajectory is never empty")
    }

    /// Latent at the noise level where sampling step `i` starts.
    pub fn latent_for_step(&self, i: usize) -> Option<&Field> {
        self.step_count().checked_sub(i).map(|k| &self.latents[k])
    }

    /// Writes `step_0000.fld …` plus `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.latents.len());
        for (k, latent) in self.latents.iter().enumerate() {
            let name = format!("step_{k:04}.fld");
            save_field(latent, dir.join(&name))?;
            files.push(name);
        }
        let manifest = TrajectoryManifest {
            sigmas: self.sigmas.clone(),
            files,
        };
        let path = dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: TrajectoryManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
        let latents = manifest
            .files
            .iter()
            .map(|f| load_field(dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest.sigmas, latents).map_err(|e| Error::format(&path, e.to_string()))
    }
}

/// One sampling step: skip-residual mixing against `inverted` (the
/// inversion latent at `σ_i`, when available), guided prediction at `σ_i`,
/// then the Euler step to `σ_{i+1}`.
pub fn sample_step(
    z: &Field,
    i: usize,
    schedule: &NoiseSchedule,
    backend: &dyn Backend,
    cfg: &GuidanceConfig,
    condition: &Condition,
    inverted: Option<&Field>,
) -> Result<(Field, Predictions)> {
    let (sigma_from, sigma_to) = schedule.step(i);
    let mixed;
    let z = match inverted {
        Some(z_inv) if i < cfg.skip_tau_index => {
            mixed = skip_residual_mix(z, z_inv, i, schedule.step_count(), cfg)?;
            &mixed
        }
        _ => z,
    };
    let preds = predict(backend, z, sigma_from, cfg, condition)?;
    let next = ddim_step(z, sigma_from, sigma_to, &preds.guided)?;
    Ok((next, preds))
}

/// Integrates from `z_T` at `σ_0` down to `σ_N = 0`.
pub fn ddim_sample(
    z_t: &Field,
    schedule: &NoiseSchedule,
    backend: &dyn Backend,
    cfg: &GuidanceConfig,
    condition: &Condition,
    inverted: Option<&TrajectoryRecord>,
) -> Result<Field> {
    cfg.validate_for(schedule.step_count())?;
    if let Some(traj) = inverted {
        if traj.step_count() != schedule.step_count() {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} steps, schedule has {}",
                traj.step_count(),
                schedule.step_count()
            )));
        }
    }
    let mut z = z_t.clone();
    for i in 0..schedule.step_count() {
        let z_inv = inverted.and_then(|t| t.latent_for_step(i));
        z = sample_step(&z, i, schedule, backend, cfg, condition, z_inv)
            .context(|| format!("sampling step {i}"))?
            .0;
    }
    Ok(z)
}

/// Integrates the ODE forward from the clean latent to `σ_max`, recording
/// every intermediate latent. The prediction is conditional, blended with
/// the unconditional one as standard CFG when `w_inversion != 1`.
pub fn ddim_invert(
    x0: &Field,
    schedule: &NoiseSchedule,
    backend: &dyn Backend,
    condition: &Condition,
    w_inversion: f32,
) -> Result<TrajectoryRecord> {
    let ascending: Vec<f64> = schedule.sigmas().iter().rev().copied().collect();
    let mut latents = Vec::with_capacity(ascending.len());
    latents.push(x0.clone());
    for (k, pair) in ascending.windows(2).enumerate() {
        let (sigma_from, sigma_to) = (pair[0], pair[1]);
        let z = latents.last().expect("non-empty");
        let next = (|| {
            let cond = denoise(backend, &DenoiseRequest::new(z, sigma_from, Some(condition)))?;
            let pred = if w_inversion == 1.0 {
                cond
            } else {
                let uncond = denoise(backend, &DenoiseRequest::new(z, sigma_from, None))?;
                cfg_standard(&cond, &uncond, w_inversion)?
            };
            ddim_step(z, sigma_from, sigma_to, &pred)
        })()
        .context(|| format!("inversion step {k}"))?;
        latents.push(next);
    }
    TrajectoryRecord::new(ascending, latents)
}
