//! One PASS/FAIL line per headline property. Exits non-zero when a check
//! fails unless it is listed in `KNOWN_SHORTFALLS` (see the README).

use std::process::ExitCode;
use std::time::Instant;

use hiwave::denoise::{denoise, AnalyticBackend, Condition, DenoiseRequest, GaussianMixture, GmmComponent};
use hiwave::exec::Execution;
use hiwave::field::{Field, Shape};
use hiwave::guidance::{
    cfg_frequency_guided, guide, skip_residual_mix, GuidanceConfig, GuidanceMode, SkipOrientation,
};
use hiwave::imaging::{
    decode_latent, encode_latent, lanczos_resize, psnr, ImageBuffer, DEFAULT_TAPS,
};
use hiwave::pipeline::{generate_base, run_pipeline, run_stage, BaseConfig, PipelinePlan, RunOptions, StageConfig};
use hiwave::rng::{gaussian_field, Rng};
use hiwave::sampler::{ddim_invert, ddim_sample, ddim_step};
use hiwave::schedule::ScheduleParams;
use hiwave::tiling::{plan_layout, Accumulator};
use hiwave::wavelet::{dwt2, idwt2, WaveletFilter};

/// Checks expected to fail; reported but not fatal.
const KNOWN_SHORTFALLS: &[&str] = &["structure"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let checks: &[(&str, Check)] = &[
        ("wavelet_reconstruction", wavelet_reconstruction),
        ("guidance_identities", guidance_identities),
        ("inversion_round_trip", inversion_round_trip),
        ("linear_ode_oracle", linear_ode_oracle),
        ("tiling", tiling),
        ("reproduction", reproduction),
        ("structure", structure),
        ("skip_residuals", skip_residuals),
        ("ablations", ablations),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut fatal = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let clock = Instant::now();
        let o = check();
        let known = KNOWN_SHORTFALLS.contains(name);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known shortfall)",
            (false, false) => "FAIL",
        };
        println!("{tag} {name}: {} [{:.2}s]", o.detail, clock.elapsed().as_secs_f64());
        if !o.pass && !known {
            fatal += 1;
        }
    }
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn wavelet_reconstruction() -> Outcome {
    let clock = Instant::now();
    let mut rng = Rng::new(1);
    let mut worst = 0.0f32;
    for filter in [WaveletFilter::sym4(), WaveletFilter::haar()] {
        for n in 2..=257 {
            // Square, tall and wide shapes cover odd sizes on either axis.
            for (h, w) in [(n, n), (n, 2 + n % 7), (3 + n % 5, n)] {
                let x = gaussian_field(&mut rng, Shape::new(1, h, w)).unwrap();
                let back = idwt2(&dwt2(&x, &filter).unwrap(), &filter).unwrap();
                worst = worst.max(back.max_abs_diff(&x).unwrap());
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(worst <= 1e-5 && secs < 5.0, format!("max error {worst:.2e}, {secs:.2}s"))
}

fn guidance_identities() -> Outcome {
    let mut rng = Rng::new(2);
    let shape = Shape::new(4, 64, 48);
    let mut unity = 0.0f32;
    let mut low = 0.0f32;
    let mut cfg_bitwise = true;
    for filter_kind in [hiwave::wavelet::WaveletKind::Sym4, hiwave::wavelet::WaveletKind::Haar] {
        for _ in 0..4 {
            let c = gaussian_field(&mut rng, shape).unwrap();
            let u = gaussian_field(&mut rng, shape).unwrap();
            let mut cfg = GuidanceConfig {
                wavelet: filter_kind,
                w_d: 1.0,
                ..GuidanceConfig::default()
            };
            unity = unity.max(cfg_frequency_guided(&c, &u, &cfg).unwrap().max_abs_diff(&c).unwrap());
            let filter = cfg.filter();
            let c_low = dwt2(&c, &filter).unwrap().low;
            for w_d in [0.0, 1.0, 7.5] {
                cfg.w_d = w_d;
                let out = cfg_frequency_guided(&c, &u, &cfg).unwrap();
                low = low.max(dwt2(&out, &filter).unwrap().low.max_abs_diff(&c_low).unwrap());
            }
            for w in [0.0f32, 1.0, 3.0, 7.5] {
                let cfg = GuidanceConfig {
                    mode: GuidanceMode::StandardCfg,
                    w,
                    ..GuidanceConfig::default()
                };
                let got = guide(&c, Some(&u), &cfg).unwrap();
                let expected: Vec<u32> = c.data().iter().zip(u.data()).map(|(&c, &u)| (u + w * (c - u)).to_bits()).collect();
                cfg_bitwise &= got.data().iter().map(|v| v.to_bits()).eq(expected);
            }
        }
    }
    outcome(
        unity <= 1e-5 && low <= 1e-5 && cfg_bitwise,
        format!("w_d=1 error {unity:.2e}, low-band error {low:.2e}, standard cfg bitwise {cfg_bitwise}"),
    )
}

/// Component mean plus noise truncated at 3 standard deviations.
fn typical_sample(backend: &AnalyticBackend, component: usize, seed: u64) -> Field {
    let comp = &backend.mixture().components()[component];
    let eps = gaussian_field(&mut Rng::new(seed), comp.mean.shape()).unwrap();
    let s = comp.std as f32;
    comp.mean.zip_map(&eps, "sample", |m, e| m + s * e.clamp(-3.0, 3.0)).unwrap()
}

fn round_trip_error(backend: &AnalyticBackend, x: &Field, cond: &Condition, steps: usize) -> f32 {
    let schedule = ScheduleParams {
        steps,
        ..ScheduleParams::default()
    }
    .build()
    .unwrap();
    let traj = ddim_invert(x, &schedule, backend, cond, 1.0).unwrap();
    let back = ddim_sample(traj.final_latent(), &schedule, backend, &GuidanceConfig::conditional_only(), cond, None).unwrap();
    back.max_abs_diff(x).unwrap()
}

fn inversion_round_trip() -> Outcome {
    let clock = Instant::now();
    let backend = AnalyticBackend::desk(0).unwrap();
    let cond = Condition::component(2);
    let x = typical_sample(&backend, 2, 3);
    let errs: Vec<f32> = [25, 50, 100, 200].iter().map(|&n| round_trip_error(&backend, &x, &cond, n)).collect();
    let monotone = errs.windows(2).all(|w| w[1] <= w[0]);
    let secs = clock.elapsed().as_secs_f64();
    let listed: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(
        errs[1] < 5e-2 && monotone && secs < 30.0,
        format!("max error at N=25/50/100/200 [{}], {secs:.2}s", listed.join(", ")),
    )
}

fn linear_ode_oracle() -> Outcome {
    let s = 0.5f64;
    let backend = AnalyticBackend::new(
        GaussianMixture::new(vec![GmmComponent {
            weight: 1.0,
            mean: Field::zeros(Shape::new(1, 1, 1)).unwrap(),
            std: s,
        }])
        .unwrap(),
    );
    let z0 = Field::filled(Shape::new(1, 1, 1), 1.0).unwrap();
    let integrate = |a: f64, b: f64, n: usize| {
        let mut z = z0.clone();
        for k in 0..n {
            let from = a * (b / a).powf(k as f64 / n as f64);
            let to = a * (b / a).powf((k + 1) as f64 / n as f64);
            let d = denoise(&backend, &DenoiseRequest::new(&z, from, None)).unwrap();
            z = ddim_step(&z, from, to, &d).unwrap();
        }
        f64::from(z.data()[0])
    };
    let mut ratios = Vec::new();
    for (a, b) in [(10.0, 0.05), (0.05, 10.0)] {
        let exact = ((s * s + b * b) / (s * s + a * a)).sqrt();
        let errs: Vec<f64> = [16, 32, 64, 128, 256].iter().map(|&n| (integrate(a, b, n) - exact).abs()).collect();
        ratios.extend(errs.windows(2).map(|w| w[0] / w[1]));
    }
    let pass = ratios.iter().all(|r| (1.7..2.3).contains(r));
    outcome(pass, format!("error ratios per doubling of N {ratios:.3?}"))
}

fn small_backend() -> AnalyticBackend {
    AnalyticBackend::new(GaussianMixture::synthetic(Shape::new(3, 16, 16), 3, 0.1, 3).unwrap())
}

fn tiling() -> Outcome {
    // Partition of unity on a spread of canvases.
    let mut unity = 0.0f64;
    for (canvas, patch) in [((64, 64), (16, 16)), ((37, 53), (16, 8)), ((16, 16), (16, 16)), ((100, 30), (7, 30))] {
        let layout = plan_layout(canvas, patch).unwrap();
        let shape = Shape::new(2, canvas.0, canvas.1);
        let ones = Field::filled(Shape::new(2, patch.0, patch.1), 1.0).unwrap();
        let mut acc = Accumulator::new(shape);
        for p in 0..layout.len() {
            layout.accumulate(&mut acc, p, &ones).unwrap();
        }
        let sum = acc.finish().unwrap();
        unity = unity.max(sum.data().iter().map(|&v| (f64::from(v) - 1.0).abs()).fold(0.0, f64::max));
    }

    let backend = small_backend();
    let cond = Condition::component(1);
    let input = generate_base(&backend, &cond, 2, &BaseConfig::default()).unwrap();
    let mut stage = StageConfig::new((40, 40), 16, 3);
    stage.schedule.steps = 10;
    let runs: Vec<ImageBuffer> = [1, 4, 9]
        .iter()
        .map(|&b| {
            stage.batch_size = b;
            run_stage(&input, &stage, &backend, &cond, 2, 0, &RunOptions::default()).unwrap()
        })
        .collect();
    let batch_invariant = runs.windows(2).all(|w| w[0] == w[1]);

    // A canvas equal to the patch against plain sampling of the whole latent.
    let small = lanczos_resize(&input, 11, 13, DEFAULT_TAPS).unwrap();
    let mut single = StageConfig::new((16, 16), 16, 3);
    single.schedule.steps = 10;
    let tiled = run_stage(&small, &single, &backend, &cond, 2, 0, &RunOptions::default()).unwrap();
    let schedule = single.schedule.build().unwrap();
    let x0 = encode_latent(&lanczos_resize(&small, 16, 16, DEFAULT_TAPS).unwrap(), &backend).unwrap();
    let traj = ddim_invert(&x0, &schedule, &backend, &cond, 1.0).unwrap();
    let z = ddim_sample(traj.final_latent(), &schedule, &backend, &single.guidance, &cond, Some(&traj)).unwrap();
    let single_equal = tiled == decode_latent(&z, &backend).unwrap();

    outcome(
        unity <= 1e-6 && batch_invariant && single_equal,
        format!("weight-sum error {unity:.2e}, batch invariant {batch_invariant}, single patch bitwise {single_equal}"),
    )
}

fn reproduction() -> Outcome {
    let backend = AnalyticBackend::desk(0).unwrap();
    let cond = Condition::component(1);
    let base = generate_base(&backend, &cond, 7, &BaseConfig::default()).unwrap();
    let mut stage = StageConfig::new((128, 128), 64, 0);
    stage.schedule.steps = 200;
    stage.guidance = GuidanceConfig::conditional_only();
    let out = run_stage(&base, &stage, &backend, &cond, 7, 0, &RunOptions::default()).unwrap();
    let reference = lanczos_resize(&base, 128, 128, DEFAULT_TAPS).unwrap();
    let db = psnr(&out, &reference).unwrap();
    outcome(db >= 40.0, format!("PSNR {db:.2} dB vs upscaled input (target >= 40)"))
}

fn structure() -> Outcome {
    let backend = AnalyticBackend::desk(0).unwrap();
    let opts = RunOptions {
        execution: Execution::Sequential,
        ..RunOptions::default()
    };
    let clock = Instant::now();
    let out = run_pipeline(&PipelinePlan::desk(Condition::component(1), 7), &backend, &opts).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let base = &out.images[0];
    let down = lanczos_resize(out.final_image(), base.height(), base.width(), DEFAULT_TAPS).unwrap();
    let db = psnr(&down, base).unwrap();
    let last = out.manifest.stages.last().unwrap();
    let latent = encode_latent(out.final_image(), &backend).unwrap();
    let shape = latent.shape();
    let seams = plan_layout((shape.height, shape.width), last.patch).unwrap().seam_statistic(&latent).unwrap();
    let ratio = seams.ratio();
    outcome(
        db >= 28.0 && ratio <= 1.5 && secs < 60.0,
        format!("PSNR {db:.2} dB (target >= 28), seam ratio {ratio:.3} (<= 1.5), {secs:.2}s single-threaded (< 60)"),
    )
}

fn skip_residuals() -> Outcome {
    let mut rng = Rng::new(9);
    let shape = Shape::new(3, 8, 8);
    let cur = gaussian_field(&mut rng, shape).unwrap();
    let inv = gaussian_field(&mut rng, shape).unwrap();
    let n = 50;
    let mut untouched = true;
    let mut convex = true;
    let mut orientations_differ = true;
    for orientation in ["prose", "literal"] {
        let cfg = GuidanceConfig {
            skip_tau_index: 15,
            skip_orientation: orientation.parse::<SkipOrientation>().unwrap(),
            ..GuidanceConfig::default()
        };
        for i in 0..n {
            let mixed = skip_residual_mix(&cur, &inv, i, n, &cfg).unwrap();
            if i >= cfg.skip_tau_index {
                untouched &= mixed.data().iter().map(|v| v.to_bits()).eq(cur.data().iter().map(|v| v.to_bits()));
            } else {
                convex &= mixed.data().iter().zip(cur.data().iter().zip(inv.data())).all(|(&m, (&a, &b))| {
                    let slack = 1e-6 * a.abs().max(b.abs()).max(1.0);
                    m >= a.min(b) - slack && m <= a.max(b) + slack
                });
            }
        }
    }
    for i in 1..15 {
        let cfg = |o| GuidanceConfig {
            skip_tau_index: 15,
            skip_orientation: o,
            ..GuidanceConfig::default()
        };
        let p = skip_residual_mix(&cur, &inv, i, n, &cfg(SkipOrientation::Prose)).unwrap();
        let l = skip_residual_mix(&cur, &inv, i, n, &cfg(SkipOrientation::Literal)).unwrap();
        orientations_differ &= p != l;
    }
    outcome(
        untouched && convex && orientations_differ,
        format!("untouched past tau {untouched}, convex {convex}, orientations distinct {orientations_differ}"),
    )
}

fn ablations() -> Outcome {
    let backend = AnalyticBackend::desk(0).unwrap();
    let full = PipelinePlan::desk(Condition::component(1), 7);
    let arms = [
        ("full", full.clone()),
        ("standard_cfg", full.clone().with_mode(GuidanceMode::StandardCfg)),
        ("low_band_only", full.clone().with_mode(GuidanceMode::LowBandOnly)),
        ("no_inversion", full.clone().without_inversion()),
        ("one_shot", full.one_shot()),
    ];
    let mut hashes = Vec::new();
    for (name, plan) in &arms {
        match run_pipeline(plan, &backend, &RunOptions::default()) {
            Ok(out) => hashes.push((*name, out.manifest.final_hash().to_owned())),
            Err(e) => return outcome(false, format!("{name} failed: {e}")),
        }
    }
    let full_hash = &hashes[0].1;
    let distinct = hashes[1..].iter().all(|(_, h)| h != full_hash);
    let summary: Vec<String> = hashes.iter().map(|(n, h)| format!("{n}={}", &h[..8])).collect();
    outcome(distinct, summary.join(" "))
}
