//! `hiwave` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hiwave::denoise::{AnalyticBackend, Backend, Condition, RemoteBackend, RemoteConfig};
use hiwave::exec::Execution;
use hiwave::field::save_field;
use hiwave::guidance::{GuidanceMode, SkipOrientation};
use hiwave::imaging::{encode_latent, load_image, psnr, save_image, ImageBuffer};
use hiwave::pipeline::{run_stage, OutputRecord, PipelinePlan, RunManifest, RunOptions, StageTiming};
use hiwave::schedule::ScheduleKind;
use hiwave::tiling::plan_layout;
use hiwave::wavelet::{dwt2, WaveletFilter, WaveletKind};
use hiwave::Result;

#[derive(Parser)]
#[command(name = "hiwave", version, about = "Frequency-guided tiled diffusion upscaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a base image and refine it through every stage of the plan.
    Generate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Refine an existing image through the detail stages of the plan.
    Upscale {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Invert an image's latent and write the trajectory directory.
    Invert {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        w_inversion: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the four single-level wavelet bands of an image.
    InspectBands {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "sym4")]
        wavelet: WaveletKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR in dB between two images of the same size.
    Psnr { a: PathBuf, b: PathBuf },
    /// Print the patch layout for a latent canvas as JSON.
    Layout {
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        patch: usize,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// `analytic` (built-in Gaussian-mixture prior) or `remote`.
    #[arg(long, default_value = "analytic")]
    backend: String,
    #[arg(long)]
    remote_url: Option<String>,
    /// Seed of the analytic prior's component means.
    #[arg(long, default_value_t = 0)]
    prior_seed: u64,
    /// Prompt, or component index for the analytic backend.
    #[arg(long, visible_alias = "prompt", default_value = "0")]
    condition: String,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated sizes in pixels. Sizes up to the backend's native
    /// resolution (the base image) are skipped.
    #[arg(long, default_value = "64,128,256", value_delimiter = ',', num_args = 0..)]
    plan: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value = "karras_rho7")]
    schedule: ScheduleKind,
    #[arg(long)]
    sigma_min: Option<f64>,
    #[arg(long)]
    sigma_max: Option<f64>,
    #[arg(long)]
    w: Option<f32>,
    #[arg(long)]
    wd: Option<f32>,
    /// Skip-residual threshold per stage, or one value for all stages.
    /// Defaults to 15/50 of the steps, then 30/50.
    #[arg(long, value_delimiter = ',')]
    tau: Vec<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value = "frequency_guided")]
    mode: GuidanceMode,
    #[arg(long, default_value = "sym4")]
    wavelet: WaveletKind,
    #[arg(long, default_value = "prose")]
    skip_orientation: SkipOrientation,
    /// Patch size in latent units.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Random-noise patch initialization instead of inversion.
    #[arg(long)]
    no_inversion: bool,
    /// Jump straight to the last plan size.
    #[arg(long)]
    one_shot: bool,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

impl BackendArgs {
    fn connect(&self) -> Result<Box<dyn Backend>> {
        match self.backend.as_str() {
            "analytic" => Ok(Box::new(AnalyticBackend::desk(self.prior_seed)?)),
            "remote" => {
                let url = self.remote_url.as_deref().ok_or_else(|| {
                    hiwave::Error::InvalidArgument("--backend remote needs --remote-url".into())
                })?;
                Ok(Box::new(RemoteBackend::connect(RemoteConfig::new(url))?))
            }
            other => Err(hiwave::Error::InvalidArgument(format!(
                "unknown backend {other:?} (expected analytic or remote)"
            ))),
        }
    }
}

impl RunArgs {
    fn plan(&self, native: (usize, usize)) -> Result<PipelinePlan> {
        let sizes: Vec<usize> = self.plan.iter().copied().filter(|&s| s > native.0.max(native.1)).collect();
        let mut plan = PipelinePlan::progressive(Condition::new(self.backend.condition.clone()), self.seed, &sizes, self.steps);
        if self.tau.len() > 1 && self.tau.len() != sizes.len() {
            return Err(hiwave::Error::InvalidArgument(format!(
                "--tau lists {} values for {} stages",
                self.tau.len(),
                sizes.len()
            )));
        }
        let schedules = std::iter::once(&mut plan.base.schedule).chain(plan.stages.iter_mut().map(|s| &mut s.schedule));
        for s in schedules {
            s.kind = self.schedule;
            s.sigma_min = self.sigma_min.unwrap_or(s.sigma_min);
            s.sigma_max = self.sigma_max.unwrap_or(s.sigma_max);
        }
        if let Some(w) = self.w {
            plan.base.guidance.w = w;
        }
        for (k, s) in plan.stages.iter_mut().enumerate() {
            let g = &mut s.guidance;
            g.w = self.w.unwrap_or(g.w);
            g.w_d = self.wd.unwrap_or(g.w_d);
            if let Some(&tau) = self.tau.get(k).or(self.tau.first()) {
                g.skip_tau_index = tau;
            }
            g.alpha = self.alpha.unwrap_or(g.alpha);
            g.wavelet = self.wavelet;
            g.skip_orientation = self.skip_orientation;
            if let Some(p) = self.patch {
                s.patch = (p, p);
            }
            s.batch_size = self.batch.unwrap_or(s.batch_size);
        }
        plan = plan.with_mode(self.mode);
        if self.no_inversion {
            plan = plan.without_inversion();
        }
        if self.one_shot {
            plan = plan.one_shot();
        }
        plan.validate()?;
        Ok(plan)
    }

    fn options(&self) -> RunOptions<'static> {
        RunOptions {
            execution: if self.sequential { Execution::Sequential } else { Execution::Parallel },
            ..RunOptions::default()
        }
    }
}

fn upscale(input: &Path, run: &RunArgs) -> Result<()> {
    let backend = run.backend.connect()?;
    let input_img = load_image(input)?;
    let plan = run.plan((input_img.height(), input_img.width()))?;
    let options = run.options();
    let mut images = vec![input_img];
    let mut timings = vec![StageTiming {
        name: "input".into(),
        seconds: 0.0,
    }];
    for (k, stage) in plan.stages.iter().enumerate() {
        let clock = std::time::Instant::now();
        let out = run_stage(images.last().expect("non-empty"), stage, backend.as_ref(), &plan.condition, plan.seed, k, &options)?;
        timings.push(StageTiming {
            name: format!("stage_{}", k + 1),
            seconds: clock.elapsed().as_secs_f64(),
        });
        images.push(out);
    }
    std::fs::create_dir_all(&run.out).map_err(|e| hiwave::Error::io(&run.out, e))?;
    let mut outputs = Vec::new();
    for (img, t) in images.iter().zip(&timings) {
        let mut record = OutputRecord::new(&t.name, img);
        let name = format!("{}.png", t.name);
        save_image(img, run.out.join(&name))?;
        record.path = Some(name);
        outputs.push(record);
    }
    let last = timings.last().expect("non-empty").name.clone();
    RunManifest::new(&plan, backend.descriptor(), timings, outputs).write(run.out.join("manifest.json"))?;
    println!("{}", run.out.join(format!("{last}.png")).display());
    Ok(())
}

fn inspect_bands(input: &Path, kind: WaveletKind, out: &Path) -> Result<()> {
    let img = load_image(input)?;
    let bands = dwt2(img.as_field(), &WaveletFilter::new(kind))?;
    std::fs::create_dir_all(out).map_err(|e| hiwave::Error::io(out, e))?;
    let names = ["low", "horizontal", "vertical", "diagonal"];
    for (name, band) in names.iter().zip(bands.bands()) {
        save_field(band, out.join(format!("{name}.fld")))?;
        // Orthonormal 2D analysis doubles the low band; details centre on grey.
        let preview = if *name == "low" {
            band.scale(0.5)?
        } else {
            band.map("preview", |v| v + 0.5)?
        };
        save_image(&ImageBuffer::from_field(preview)?, out.join(format!("{name}.png")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { run } => {
            let backend = run.backend.connect()?;
            let plan = run.plan(backend.native_resolution())?;
            let mut output = hiwave::pipeline::run_pipeline(&plan, backend.as_ref(), &run.options())?;
            output.save(&run.out)?;
            println!("{} {:.2}s", output.manifest.final_hash(), output.manifest.total_seconds());
        }
        Command::Upscale { input, run } => upscale(&input, &run)?,
        Command::Invert {
            input,
            backend,
            steps,
            w_inversion,
            out,
        } => {
            let engine = backend.connect()?;
            let schedule = hiwave::schedule::ScheduleParams {
                steps,
                ..Default::default()
            }
            .build()?;
            let latent = encode_latent(&load_image(&input)?, engine.as_ref())?;
            let traj = hiwave::sampler::ddim_invert(&latent, &schedule, engine.as_ref(), &Condition::new(backend.condition), w_inversion)?;
            traj.save(&out)?;
        }
        Command::InspectBands { input, wavelet, out } => inspect_bands(&input, wavelet, &out)?,
        Command::Psnr { a, b } => println!("{:.4}", psnr(&load_image(a)?, &load_image(b)?)?),
        Command::Layout { height, width, patch } => println!("{}", plan_layout((height, width), (patch, patch))?.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
