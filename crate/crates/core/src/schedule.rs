//! Discretized noise levels for the σ-parameterized probability-flow ODE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Power-law interpolation in `σ^(1/7)` space.
    #[default]
    KarrasRho7,
    LinearSigma,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "karras_rho7" | "karras" => Ok(ScheduleKind::KarrasRho7),
            "linear_sigma" | "linear" => Ok(ScheduleKind::LinearSigma),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule {other:?} (expected karras_rho7 or linear_sigma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::KarrasRho7,
            steps: 50,
            sigma_min: 0.002,
            sigma_max: 80.0,
        }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.kind, self.steps, self.sigma_min, self.sigma_max)
    }
}

/// `σ_0 > σ_1 > … > σ_{N-1} > σ_N = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
}

const RHO: f64 = 7.0;

pub fn build_schedule(
    kind: ScheduleKind,
    n_steps: usize,
    sigma_min: f64,
    sigma_max: f64,
) -> Result<NoiseSchedule> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("schedule needs at least one step".into()));
    }
    if !(sigma_min.is_finite() && sigma_max.is_finite() && 0.0 < sigma_min && sigma_min < sigma_max) {
        return Err(Error::InvalidArgument(format!(
            "schedule bounds must satisfy 0 < sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
        )));
    }
    let mut sigmas = Vec::with_capacity(n_steps + 1);
    if n_steps == 1 {
        sigmas.push(sigma_max);
    } else {
        let last = (n_steps - 1) as f64;
        match kind {
            ScheduleKind::KarrasRho7 => {
                let hi = sigma_max.powf(1.0 / RHO);
                let lo = sigma_min.powf(1.0 / RHO);
                sigmas.extend((0..n_steps).map(|i| (hi + i as f64 / last * (lo - hi)).powf(RHO)));
            }
            ScheduleKind::LinearSigma => {
                sigmas.extend(
                    (0..n_steps).map(|i| sigma_max + i as f64 / last * (sigma_min - sigma_max)),
                );
            }
        }
        // Pin the endpoints against rounding in the power interpolation.
        sigmas[0] = sigma_max;
        sigmas[n_steps - 1] = sigma_min;
    }
    sigmas.push(0.0);
    NoiseSchedule::from_sigmas(sigmas)
}

impl NoiseSchedule {
    /// Wraps an explicit grid. It must be strictly decreasing and end at
    /// exactly zero; `[0.0]` is the zero-step schedule.
    pub fn from_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.last() != Some(&0.0) {
            return Err(Error::InvalidArgument("schedule must end with sigma = 0".into()));
        }
        if sigmas.iter().any(|s| !s.is_finite()) || sigmas.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidArgument(
                "schedule must be finite and strictly decreasing".into(),
            ));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn step_count(&self) -> usize {
        self.sigmas.len() - 1
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    /// Smallest non-zero level, if any step exists.
    pub fn sigma_min(&self) -> Option<f64> {
        let n = self.step_count();
        (n > 0).then(|| self.sigmas[n - 1])
    }

    /// `(σ_i, σ_{i+1})` for sampling step `i`.
    pub fn step(&self, i: usize) -> (f64, f64) {
        (self.sigmas[i], self.sigmas[i + 1])
    }
}
