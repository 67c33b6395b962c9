use std::borrow::Cow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::denoise::{Backend, BaseRequest, Condition};
use crate::error::{Error, Result, ResultExt};
use crate::field::{load_field, Field};
use crate::imaging::{decode_latent, encode_latent, lanczos_resize, ImageBuffer, DEFAULT_TAPS};
use crate::pipeline::manifest::{OutputRecord, RunManifest, StageTiming};
use crate::pipeline::{BaseConfig, PatchInit, PipelinePlan, RunOptions, StageConfig};
use crate::rng::{gaussian_field, Rng};
use crate::sampler::{ddim_invert, ddim_sample, sample_step, Predictions, TrajectoryRecord};
use crate::tiling::{plan_layout, Accumulator};

/// One patch prediction during detail sampling.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub stage: usize,
    pub step: usize,
    pub patch: usize,
    pub predictions: &'a Predictions,
}

/// Samples the base image, or delegates to the backend when it generates
/// base images itself.
pub fn generate_base(backend: &dyn Backend, condition: &Condition, seed: u64, base: &BaseConfig) -> Result<ImageBuffer> {
    let (height, width) = backend.native_resolution();
    let request = BaseRequest {
        prompt: condition.as_str().to_owned(),
        seed,
        width,
        height,
    };
    if let Some(result) = backend.generate_base(&request) {
        return result.context(|| "base generation".to_owned());
    }
    let shape = backend.native_latent_shape().ok_or_else(|| {
        Error::InvalidArgument("backend neither generates base images nor reports a latent shape".into())
    })?;
    let schedule = base.schedule.build()?;
    let noise = gaussian_field(&mut Rng::new(seed), shape)?;
    let z_t = noise.scale(schedule.sigma_max() as f32)?;
    let x = ddim_sample(&z_t, &schedule, backend, &base.guidance, condition, None)
        .context(|| "base generation".to_owned())?;
    decode_latent(&x, backend)
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stage as u64 + 1)
}

/// Per-patch inversion trajectories, in memory or spilled to disk.
enum TrajectoryStore {
    None,
    Memory(Vec<TrajectoryRecord>),
    Disk { dir: tempfile::TempDir, steps: usize },
}

impl TrajectoryStore {
    fn patch_dir(dir: &Path, patch: usize) -> PathBuf {
        dir.join(format!("patch_{patch:04}"))
    }

    fn latent(&self, patch: usize, step: usize) -> Result<Option<Cow<'_, Field>>> {
        Ok(match self {
            TrajectoryStore::None => None,
            TrajectoryStore::Memory(records) => records[patch].latent_for_step(step).map(Cow::Borrowed),
            TrajectoryStore::Disk { dir, steps } => {
                let k = steps - step;
                let path = Self::patch_dir(dir.path(), patch).join(format!("step_{k:04}.fld"));
                Some(Cow::Owned(load_field(path)?))
            }
        })
    }
}

/// Upscales `input` to the stage target, inverts each patch of its latent
/// and resamples the blended canvas.
#[allow(clippy::too_many_arguments)]
pub fn run_stage(
    input: &ImageBuffer,
    stage: &StageConfig,
    backend: &dyn Backend,
    condition: &Condition,
    seed: u64,
    stage_index: usize,
    options: &RunOptions<'_>,
) -> Result<ImageBuffer> {
    stage.validate()?;
    let (th, tw) = stage.target;
    if th < input.height() || tw < input.width() {
        return Err(Error::InvalidArgument(format!(
            "stage target {th}x{tw} is smaller than its {}x{} input",
            input.height(),
            input.width()
        )));
    }
    let schedule = stage.schedule.build()?;
    let n = schedule.step_count();
    let exec = options.execution;

    let upscaled = lanczos_resize(input, th, tw, DEFAULT_TAPS)?;
    let x0 = encode_latent(&upscaled, backend)?;
    let shape = x0.shape();
    if let Some(native) = backend.native_latent_shape() {
        if (native.height, native.width) != stage.patch {
            return Err(Error::InvalidArgument(format!(
                "patch {:?} does not match the backend's native latent size {}x{}",
                stage.patch, native.height, native.width
            )));
        }
    }
    let layout = plan_layout((shape.height, shape.width), stage.patch)?;
    log::info!(
        "stage {stage_index}: {th}x{tw}, latent {shape}, {} patches, {n} steps",
        layout.len()
    );

    let (mut z, store) = match stage.init {
        PatchInit::RandomNoise => {
            let noise = gaussian_field(&mut Rng::new(stage_seed(seed, stage_index)), shape)?;
            (noise.scale(schedule.sigma_max() as f32)?, TrajectoryStore::None)
        }
        PatchInit::Inversion => {
            let patch_len = shape.channels * stage.patch.0 * stage.patch.1;
            let bytes = layout.len() * (n + 1) * patch_len * 4;
            let spill = bytes > options.trajectory_budget;
            let dir = if spill {
                log::info!("stage {stage_index}: {bytes} bytes of trajectories, spilling to disk");
                Some(tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?)
            } else {
                None
            };
            let mut records = Vec::new();
            let mut acc = Accumulator::new(shape);
            for batch in layout.stream_batches(stage.batch_size)? {
                let start = batch.start;
                let trajectories = exec.try_map(batch.len(), |j| {
                    let p = start + j;
                    let patch = layout.extract(&x0, p)?;
                    ddim_invert(&patch, &schedule, backend, condition, stage.inversion_w)
                        .context(|| format!("stage {stage_index}, patch {p}"))
                })?;
                for (j, traj) in trajectories.into_iter().enumerate() {
                    let p = start + j;
                    layout.accumulate(&mut acc, p, traj.final_latent())?;
                    match &dir {
                        Some(dir) => traj.save(TrajectoryStore::patch_dir(dir.path(), p))?,
                        None => records.push(traj),
                    }
                }
            }
            let store = match dir {
                Some(dir) => TrajectoryStore::Disk { dir, steps: n },
                None => TrajectoryStore::Memory(records),
            };
            (acc.finish()?, store)
        }
    };

    let cfg = &stage.guidance;
    for i in 0..n {
        let mut acc = Accumulator::new(shape);
        for batch in layout.stream_batches(stage.batch_size)? {
            let start = batch.start;
            let stepped = exec.try_map(batch.len(), |j| {
                let p = start + j;
                (|| {
                    let zp = layout.extract(&z, p)?;
                    let z_inv = if i < cfg.skip_tau_index { store.latent(p, i)? } else { None };
                    let (next, preds) = sample_step(&zp, i, &schedule, backend, cfg, condition, z_inv.as_deref())?;
                    if let Some(observe) = options.observer {
                        observe(&StepEvent {
                            stage: stage_index,
                            step: i,
                            patch: p,
                            predictions: &preds,
                        });
                    }
                    Ok(next)
                })()
                .context(|| format!("stage {stage_index}, patch {p}, step {i}"))
            })?;
            for (j, next) in stepped.iter().enumerate() {
                layout.accumulate(&mut acc, start + j, next)?;
            }
        }
        z = acc.finish()?;
    }
    decode_latent(&z, backend)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Base image followed by each stage's output.
    pub images: Vec<ImageBuffer>,
    pub manifest: RunManifest,
}

impl PipelineOutput {
    pub fn final_image(&self) -> &ImageBuffer {
        self.images.last().expect("the base image is always present")
    }

    /// Writes every image as 16-bit PNG (PPM without the `png` feature)
    /// and `manifest.json` into `dir`, recording paths in the manifest.
    pub fn save(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ext = if cfg!(feature = "png") { "png" } else { "ppm" };
        for (img, record) in self.images.iter().zip(&mut self.manifest.outputs) {
            let name = format!("{}.{ext}", record.name);
            crate::imaging::save_image(img, dir.join(&name))?;
            record.path = Some(name);
        }
        self.manifest.write(dir.join("manifest.json"))
    }
}

/// Base generation followed by every detail stage of `plan`.
pub fn run_pipeline(plan: &PipelinePlan, backend: &dyn Backend, options: &RunOptions<'_>) -> Result<PipelineOutput> {
    plan.validate()?;
    let mut timings = Vec::new();
    let clock = Instant::now();
    let base = generate_base(backend, &plan.condition, plan.seed, &plan.base)?;
    timings.push(StageTiming {
        name: "base".into(),
        seconds: clock.elapsed().as_secs_f64(),
    });
    let mut images = vec![base];
    for (k, stage) in plan.stages.iter().enumerate() {
        let clock = Instant::now();
        let input = images.last().expect("non-empty");
        let out = run_stage(input, stage, backend, &plan.condition, plan.seed, k, options)
            .context(|| format!("stage {k}"))?;
        timings.push(StageTiming {
            name: format!("stage_{}", k + 1),
            seconds: clock.elapsed().as_secs_f64(),
        });
        images.push(out);
    }
    let outputs = images
        .iter()
        .zip(&timings)
        .map(|(img, t)| OutputRecord::new(&t.name, img))
        .collect();
    let manifest = RunManifest::new(plan, backend.descriptor(), timings, outputs);
    Ok(PipelineOutput { images, manifest })
}
