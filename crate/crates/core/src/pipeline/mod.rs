//! Progressive generation: a native-resolution base image followed by
//! detail stages that each upscale in pixel space, invert every patch and
//! resample the blended canvas under frequency-split guidance.

mod manifest;
mod stage;

use serde::{Deserialize, Serialize};

pub use manifest::{OutputRecord, RunManifest, StageTiming};
pub use stage::{generate_base, run_pipeline, run_stage, PipelineOutput, StepEvent};

use crate::denoise::Condition;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::guidance::{GuidanceConfig, GuidanceMode};
use crate::schedule::ScheduleParams;

/// How a stage initializes each patch before guided sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchInit {
    /// Invert the upscaled patch; its trajectory also feeds skip residuals.
    #[default]
    Inversion,
    /// Fresh Gaussian noise at `σ_max`; skip residuals are unavailable.
    RandomNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Output size in pixels, `(height, width)`.
    pub target: (usize, usize),
    pub schedule: ScheduleParams,
    pub guidance: GuidanceConfig,
    /// Patch size in latent units.
    pub patch: (usize, usize),
    pub batch_size: usize,
    pub init: PatchInit,
    /// Guidance strength used while inverting (1 = conditional only).
    pub inversion_w: f32,
}

impl StageConfig {
    pub fn new(target: (usize, usize), patch: usize, skip_tau_index: usize) -> Self {
        Self {
            target,
            schedule: ScheduleParams::default(),
            guidance: GuidanceConfig {
                skip_tau_index,
                ..GuidanceConfig::default()
            },
            patch: (patch, patch),
            batch_size: 4,
            init: PatchInit::Inversion,
            inversion_w: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target.0 == 0 || self.target.1 == 0 {
            return Err(Error::InvalidArgument("stage target must be non-empty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.inversion_w.is_finite() && self.inversion_w >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inversion guidance must be finite and >= 0, got {}",
                self.inversion_w
            )));
        }
        self.guidance.validate_for(self.schedule.steps)
    }
}

/// Base-image sampling settings for engine-side generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub schedule: ScheduleParams,
    pub guidance: GuidanceConfig,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            guidance: GuidanceConfig {
                mode: GuidanceMode::StandardCfg,
                ..GuidanceConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelinePlan {
    pub condition: Condition,
    pub seed: u64,
    pub base: BaseConfig,
    pub stages: Vec<StageConfig>,
}

/// Default patch size and batch size of the desk-scale plan.
pub const DESK_PATCH: usize = 64;
pub const DESK_BATCH: usize = 4;

/// Skip threshold as the same fraction of `steps` as 15 of 50 at the first
/// detail stage and 30 of 50 at the second.
fn scaled_tau(steps: usize, per_fifty: usize) -> usize {
    (steps * per_fifty).div_ceil(50).min(steps)
}

impl PipelinePlan {
    /// Base image only.
    pub fn base_only(condition: Condition, seed: u64) -> Self {
        Self {
            condition,
            seed,
            base: BaseConfig::default(),
            stages: Vec::new(),
        }
    }

    /// Progressive plan doubling from `native` through each size in `sizes`,
    /// with τ = 15/50 of the steps at the first stage and 30/50 afterwards.
    pub fn progressive(condition: Condition, seed: u64, sizes: &[usize], steps: usize) -> Self {
        let stages = sizes
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let tau = scaled_tau(steps, if k == 0 { 15 } else { 30 });
                let mut stage = StageConfig::new((s, s), DESK_PATCH, tau);
                stage.schedule.steps = steps;
                stage.batch_size = DESK_BATCH;
                stage
            })
            .collect();
        Self {
            stages,
            ..Self::base_only(condition, seed)
        }
    }

    /// 64 → 128 → 256 with 50 steps per stage.
    pub fn desk(condition: Condition, seed: u64) -> Self {
        Self::progressive(condition, seed, &[128, 256], 50)
    }

    /// Same guidance everywhere; `mode` applies to every detail stage.
    pub fn with_mode(mut self, mode: GuidanceMode) -> Self {
        for s in &mut self.stages {
            s.guidance.mode = mode;
        }
        self
    }

    /// Random-noise patch initialization with skip residuals disabled.
    pub fn without_inversion(mut self) -> Self {
        for s in &mut self.stages {
            s.init = PatchInit::RandomNoise;
            s.guidance.skip_tau_index = 0;
        }
        self
    }

    /// Collapses the detail stages into one jump to the final target, using
    /// the last stage's settings.
    pub fn one_shot(mut self) -> Self {
        if let Some(last) = self.stages.pop() {
            self.stages = vec![last];
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.base.guidance.validate_for(self.base.schedule.steps)?;
        for (k, s) in self.stages.iter().enumerate() {
            s.validate().map_err(|e| Error::InvalidArgument(format!("stage {k}: {e}")))?;
        }
        for w in self.stages.windows(2) {
            if w[1].target.0 < w[0].target.0 || w[1].target.1 < w[0].target.1 {
                return Err(Error::InvalidArgument(format!(
                    "stage targets must not shrink: {:?} then {:?}",
                    w[0].target, w[1].target
                )));
            }
        }
        Ok(())
    }
}

/// Execution settings that do not change results.
#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub execution: Execution,
    /// Trajectories larger than this many bytes per stage go to a
    /// temporary directory instead of memory.
    pub trajectory_budget: usize,
    /// Called for every patch prediction during detail sampling.
    pub observer: Option<&'a (dyn Fn(&StepEvent<'_>) + Sync)>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            execution: Execution::default(),
            trajectory_budget: 1 << 30,
            observer: None,
        }
    }
}

impl std::fmt::Debug for RunOptions<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions")
            .field("execution", &self.execution)
            .field("trajectory_budget", &self.trajectory_budget)
            .field("observer", &self.observer.is_some())
            .finish()
    }
}
