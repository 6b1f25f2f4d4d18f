//! Acceptance criteria. Prints one line per criterion and exits non-zero
//! if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vidfill::diffusion::{
    LossWeights, OracleDenoiser, latent_loss, make_schedule, sample, total_loss, v_from, x0_eps_from_v,
};
use vidfill::flow::{FlowParams, FlowSet, estimate_clip_flows, propagate_pixels};
use vidfill::fusion::{FusionConfig, count_fusion_ops, init_correlated_noise, plan_segments};
use vidfill::latent::encode;
use vidfill::maskops::{InstanceKind, InstanceMask, PairingParams, pair_shadows};
use vidfill::metrics::{PSNR_CAP, Report, psnr, ssim, ssim_frame, temporal_flicker, warping_error};
use vidfill::pipeline::{
    DEFAULT_TOGGLES, DenoiserKind, HoleSource, InpaintInput, PipelineConfig, run_ablation, run_inpaint, run_inpaint_dirs,
};
use vidfill::synth::{Background, Scene, SceneSpec, ShadowSpec, Shape, SpriteSpec, generate_scene};
use vidfill::video_io::{Frame, Mask, VideoClip, apply_mask, downscale_mask};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_fn(shape, |_| rng.random_range(-2.0..2.0))
}

fn max_abs(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn static_sprite_scene(seed: u64, frames: usize, pan: (i64, i64), size: (usize, usize), position: (i64, i64)) -> Scene {
    generate_scene(&SceneSpec {
        seed,
        frames,
        height: 64,
        width: 64,
        background: Background::Smooth,
        camera_pan: pan,
        sprites: vec![SpriteSpec {
            shape: Shape::Rect,
            size,
            position,
            velocity: (0, 0),
            color: None,
            stripes: Some(3),
            shadow: Some(ShadowSpec {
                offset: (0, 0),
                scale: 0.3,
                darkening: 0.45,
            }),
        }],
        fps: 24.0,
    })
    .expect("valid scene")
}

fn input_of(scene: &Scene) -> InpaintInput {
    InpaintInput {
        clip: scene.clip.clone(),
        holes: HoleSource::Masks(scene.removal_masks()),
        plate: Some(scene.plate.clone()),
    }
}

fn oracle_convergence() -> Outcome {
    let scene = generate_scene(&SceneSpec::suite(1)).map_err(err)?;
    let holes = scene.removal_masks();
    let target = encode(&scene.plate).map_err(err)?;
    let z_masked = encode(&apply_mask(&scene.clip, &holes).map_err(err)?).map_err(err)?;
    let known = downscale_mask(&holes, 8).map_err(err)?;
    let noise = init_correlated_noise(24, (12, 8, 8), 0.9, 7, 24.0).map_err(err)?;
    let oracle = OracleDenoiser::new(&target);
    let (mut worst, mut slowest): (f64, f64) = (0.0, 0.0);
    for n in [1, 4, 8] {
        let started = Instant::now();
        let sched = make_schedule(1000, n).map_err(err)?;
        let out = sample(&noise, &known, &z_masked, &oracle, &sched, None).map_err(err)?;
        let secs = started.elapsed().as_secs_f64();
        let e = max_abs(out.data(), target.data());
        ensure(e <= 1e-5, || format!("{n} steps: max error {e:.3e}"))?;
        ensure(secs < 5.0, || format!("{n} steps took {secs:.2} s"))?;
        worst = worst.max(e);
        slowest = slowest.max(secs);
    }
    Ok(format!("max error {worst:.2e}, slowest run {slowest:.3} s"))
}

fn v_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x0 = random_tensor(&mut rng, (2, 4, 3, 3));
        let eps = random_tensor(&mut rng, (2, 4, 3, 3));
        for abar in [0.01f64, 0.1, 0.5, 0.9, 0.99] {
            let z = abar.sqrt() * &x0 + (1.0 - abar).sqrt() * &eps;
            let v = v_from(&x0, &eps, abar);
            let (x0b, epsb) = x0_eps_from_v(&z, &v, abar);
            let zb = abar.sqrt() * &x0b + (1.0 - abar).sqrt() * &epsb;
            worst = worst.max(max_abs(&x0, &x0b)).max(max_abs(&eps, &epsb)).max(max_abs(&z, &zb));
        }
    }
    ensure(worst <= 1e-6, || format!("max error {worst:.3e}"))?;
    Ok(format!("max error {worst:.2e}"))
}

fn loss_constants() -> Outcome {
    let w = LossWeights::default();
    ensure((w.w1, w.w2, w.alpha) == (1.0, 2.0, 3.0), || format!("weights {w:?}"))?;
    let diff = Array4::from_shape_vec((1, 1, 2, 2), vec![0.5, 0.0, 1.0, 0.0]).unwrap();
    let known = Array3::from_shape_vec((1, 2, 2), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let v_true = Array4::from_elem((1, 1, 2, 2), 0.25);
    let v_hat = &v_true + &diff;
    let got = latent_loss(&v_hat, &v_true, &known, &w).map_err(err)?;

    let (mut ks, mut kw, mut hs, mut hw) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            let d = (v_hat[[0, 0, i, j]] - v_true[[0, 0, i, j]]).abs();
            let m = known[[0, i, j]];
            ks += m * d;
            kw += m;
            hs += (1.0 - m) * d;
            hw += 1.0 - m;
        }
    }
    let oracle = w.w1 * ks / kw + w.w2 * hs / hw;
    ensure((got - 0.75).abs() < 1e-12 && (got - oracle).abs() < 1e-12, || format!("latent loss {got}, oracle {oracle}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (lr, lp): (f64, f64) = (rng.random(), rng.random());
        let t = total_loss(lr, lp, &w);
        ensure((t - (lr + lp + lp + lp)).abs() < 1e-12, || format!("total loss {t} for {lr}, {lp}"))?;
    }
    Ok(format!("latent loss {got}, alpha {}", w.alpha))
}

fn fusion_op_count() -> Outcome {
    let cfg = FusionConfig::default();
    let ours = count_fusion_ops(&cfg, 8, false);
    let every = count_fusion_ops(&cfg, 8, true);
    ensure(ours == 2 && every == 8, || format!("{ours} vs {every}"))?;
    let saved = 1.0 - ours as f64 / every as f64;
    ensure(saved == 0.75, || format!("reduction {saved}"))?;
    Ok(format!("{ours} vs {every} ({}% fewer)", saved * 100.0))
}

fn blend_weights() -> Outcome {
    let cfg = FusionConfig::default();
    let mut worst: f64 = 0.0;
    for frames in 1..=200 {
        let plan = plan_segments(frames, &cfg).map_err(err)?;
        for f in 0..frames {
            let s: f64 = plan.covering(f).iter().map(|&(wi, pos)| plan.windows()[wi].weights[pos]).sum();
            ensure(!plan.covering(f).is_empty(), || format!("F={frames}: frame {f} uncovered"))?;
            worst = worst.max((s - 1.0).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

fn seam_reduction() -> Outcome {
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let scene = static_sprite_scene(100 + seed, 48, (0, 0), (24, 30), (18, 14));
        let input = input_of(&scene);
        let seam = |steps: BTreeSet<usize>| -> Result<f64, String> {
            let mut cfg = PipelineConfig {
                seed,
                denoiser: DenoiserKind::SeamProbe { amplitude: 0.1 },
                ..Default::default()
            };
            cfg.fusion.fusion_steps = steps;
            Ok(run_inpaint(&cfg, &input).map_err(err)?.report.seam)
        };
        let none = seam(BTreeSet::new())?;
        let ours = seam(BTreeSet::from([1, 7]))?;
        let every = seam((1..=8).collect())?;
        ensure(ours < none, || format!("seed {seed}: {{1,7}} {ours:.4} not below none {none:.4}"))?;
        ensure(every <= 1.1 * ours, || format!("seed {seed}: all-8 {every:.4} above {{1,7}} {ours:.4} + 10%"))?;
        lines.push(format!("{none:.3}/{ours:.3}/{every:.3}"));
    }
    Ok(format!("none/ours/all per seed: {}", lines.join(" ")))
}

fn flow_completion() -> Outcome {
    let scene = static_sprite_scene(5, 20, (1, 0), (12, 16), (26, 20));
    let holes = scene.removal_masks();
    let (h, w) = (64usize, 64usize);
    let flows = estimate_clip_flows(&scene.clip, Some(&holes), &FlowParams::default(), true).map_err(err)?;
    let (done, residual) = propagate_pixels(&scene.clip, &holes, &flows, 64).map_err(err)?;
    let exact = FlowSet::uniform(20, h, w, (-1.0, 0.0));
    let (done_exact, _) = propagate_pixels(&scene.clip, &holes, &exact, 64).map_err(err)?;

    // Brute force: a hole pixel is recoverable when the same world point
    // is visible and unoccluded in some other frame.
    let (mut recoverable, mut worst) = (0usize, 0.0f64);
    for t in 0..20 {
        for y in 0..h {
            for x in 0..w {
                if !holes.mask(t).get(y, x) {
                    continue;
                }
                let seen = (0..20).find(|&s| {
                    let xs = x as i64 - (s as i64 - t as i64);
                    (0..w as i64).contains(&xs) && !holes.mask(s).get(y, xs as usize)
                });
                if seen.is_none() {
                    continue;
                }
                recoverable += 1;
                ensure(!residual.mask(t).get(y, x), || format!("frame {t} ({y},{x}) left unfilled"))?;
                for c in 0..3 {
                    let p = scene.plate.frame(t).get(y, x, c);
                    worst = worst
                        .max((done.frame(t).get(y, x, c) - p).abs())
                        .max((done_exact.frame(t).get(y, x, c) - p).abs());
                }
            }
        }
    }
    ensure(recoverable > 0, || "nothing to recover".into())?;
    ensure(worst <= 1e-6, || format!("max error {worst:.3e} over {recoverable} pixels"))?;

    let cfg = PipelineConfig::default();
    let out = run_inpaint(&cfg, &input_of(&scene)).map_err(err)?;
    let p = out.report.psnr.unwrap_or(0.0);
    ensure(p >= 45.0, || format!("pipeline PSNR {p:.2} dB"))?;
    Ok(format!("{recoverable} pixels exact, pipeline PSNR {p:.2} dB"))
}

fn noise_statistics() -> Outcome {
    let (frames, shape) = (8, (4, 48, 48));
    let per = shape.0 * shape.1 * shape.2;
    let mut parts = Vec::new();
    for rho in [0.0, 0.5, 0.9, 1.0] {
        let z = init_correlated_noise(frames, shape, rho, 11, 24.0).map_err(err)?;
        let flat: Vec<Vec<f64>> = z.data().outer_iter().map(|f| f.iter().copied().collect()).collect();
        for (t, f) in flat.iter().enumerate() {
            let mean = f.iter().sum::<f64>() / per as f64;
            let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per as f64;
            ensure((var - 1.0).abs() <= 0.05, || format!("rho {rho}: frame {t} variance {var:.4}"))?;
        }
        let mut corr_sum = 0.0;
        for t in 1..frames {
            let (a, b) = (&flat[t - 1], &flat[t]);
            if rho == 1.0 {
                ensure(a == b, || format!("rho 1: frames {} and {t} differ", t - 1))?;
            }
            let (ma, mb) = (a.iter().sum::<f64>() / per as f64, b.iter().sum::<f64>() / per as f64);
            let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
            let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
            let r = cov / (va * vb).sqrt();
            ensure((r - rho).abs() <= 0.05, || format!("rho {rho}: pair {t} correlation {r:.4}"))?;
            corr_sum += r;
        }
        parts.push(format!("{rho}->{:.3}", corr_sum / (frames - 1) as f64));
    }
    Ok(format!("{} elements per frame, mean correlation {}", per, parts.join(" ")))
}

fn shadow_pairing() -> Outcome {
    let rect = |x0: usize, y0: usize, w: usize, h: usize| {
        Mask::from_fn(100, 100, move |y, x| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y))
    };
    let person = InstanceMask::new(0, rect(40, 10, 20, 50), InstanceKind::Human);
    let params = PairingParams::default();
    let case = |shadow: Mask| pair_shadows(std::slice::from_ref(&person), &[InstanceMask::new(0, shadow, InstanceKind::Shadow)], &params);

    let valid = case(rect(45, 60, 40, 10)).map_err(err)?;
    ensure(valid.pairs == vec![(0, 0)] && valid.unpaired.is_empty(), || format!("valid pair: {valid:?}"))?;
    let small = case(rect(45, 60, 5, 2)).map_err(err)?;
    ensure(small.pairs.is_empty() && small.unpaired == vec![0], || format!("ratio reject: {small:?}"))?;
    let upper = case(rect(25, 10, 20, 20)).map_err(err)?;
    ensure(upper.pairs.is_empty() && upper.unpaired == vec![0], || format!("upper reject: {upper:?}"))?;
    Ok("paired, rejected by area ratio, rejected by contact band".into())
}

fn ablation_harness() -> Outcome {
    let cfg = PipelineConfig::default();
    let (mut full, mut bare) = (0.0, 0.0);
    for seed in 0..10 {
        let scene = generate_scene(&SceneSpec::suite(seed)).map_err(err)?;
        let rows = run_ablation(&cfg, &input_of(&scene), &DEFAULT_TOGGLES).map_err(err)?;
        let ids: Vec<&str> = rows.iter().map(|r| r.config_id.as_str()).collect();
        ensure(ids == ["-/-", "OP/-", "-/R", "OP/R"], || format!("row ids {ids:?}"))?;
        if seed == 0 {
            let again = run_ablation(&cfg, &input_of(&scene), &DEFAULT_TOGGLES).map_err(err)?;
            let strip = |rs: &[vidfill::pipeline::AblationRow]| rs.iter().map(|r| r.report.without_runtime()).collect::<Vec<Report>>();
            ensure(strip(&rows) == strip(&again), || "rows differ between runs".into())?;
        }
        bare += rows[0].report.psnr.unwrap_or(0.0) / 10.0;
        full += rows[3].report.psnr.unwrap_or(0.0) / 10.0;
    }
    ensure(full >= bare, || format!("OP+R {full:.2} dB below none {bare:.2} dB"))?;
    Ok(format!("mean PSNR none {bare:.2} dB, OP+R {full:.2} dB"))
}

fn metric_sanity() -> Outcome {
    let scene = generate_scene(&SceneSpec::suite(4)).map_err(err)?;
    let a = &scene.clip;
    let p = psnr(a, a).map_err(err)?;
    ensure(p == PSNR_CAP, || format!("psnr(a,a) = {p}"))?;
    let s = ssim(a, a).map_err(err)?;
    ensure((s - 1.0).abs() < 1e-12, || format!("ssim(a,a) = {s}"))?;

    let zero = Frame::filled(16, 16, 1, 0.0);
    let one = Frame::filled(16, 16, 1, 1.0);
    let c1 = 1e-4;
    let closed = c1 / (1.0 + c1);
    let got = ssim_frame(&zero, &one).map_err(err)?;
    ensure((got - closed).abs() < 1e-12, || format!("constant ssim {got:.6e}, closed form {closed:.6e}"))?;

    let still = VideoClip::new(vec![scene.plate.frame(0).clone(); 6], 24.0).map_err(err)?;
    let flows = estimate_clip_flows(&still, None, &FlowParams::default(), true).map_err(err)?;
    let e = warping_error(&still, &flows).map_err(err)?;
    ensure(e == 0.0, || format!("static warping error {e}"))?;

    let flat = VideoClip::new(vec![Frame::filled(8, 8, 3, 0.3); 5], 24.0).map_err(err)?;
    let tf = temporal_flicker(&flat, None).map_err(err)?;
    ensure(tf == 100.0, || format!("constant flicker {tf}"))?;
    Ok(format!("cap {p}, constant ssim {got:.4e}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let scene = generate_scene(&SceneSpec::suite(6)).map_err(err)?;
    scene.write(dir.path().join("scene")).map_err(err)?;
    let run = |tag: &str| -> Result<(), String> {
        let mut cfg = PipelineConfig {
            threads: Some(1),
            seed: 9,
            ..Default::default()
        };
        cfg.io.frames = Some(dir.path().join("scene/frames"));
        cfg.io.masks = Some(dir.path().join("scene/masks"));
        cfg.io.plate = Some(dir.path().join("scene/plate"));
        cfg.io.out = Some(dir.path().join(tag));
        cfg.io.report = Some(dir.path().join(format!("{tag}.json")));
        run_inpaint_dirs(&cfg).map(|_| ()).map_err(err)
    };
    run("a")?;
    run("b")?;
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .map_err(err)?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    names.sort();
    ensure(!names.is_empty(), || "no output frames".into())?;
    for n in &names {
        let a = std::fs::read(dir.path().join("a").join(n)).map_err(err)?;
        let b = std::fs::read(dir.path().join("b").join(n)).map_err(err)?;
        ensure(a == b, || format!("{n:?} differs"))?;
    }
    let report = |tag: &str| -> Result<String, String> {
        let text = std::fs::read_to_string(dir.path().join(format!("{tag}.json"))).map_err(err)?;
        let r: Report = serde_json::from_str(&text).map_err(err)?;
        serde_json::to_string(&r.without_runtime()).map_err(err)
    };
    ensure(report("a")? == report("b")?, || "reports differ".into())?;
    Ok(format!("{} frames and report identical", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("oracle convergence", oracle_convergence),
        ("v-prediction algebra", v_algebra),
        ("loss constants", loss_constants),
        ("fusion-op count", fusion_op_count),
        ("blend-weight normalization", blend_weights),
        ("seam reduction", seam_reduction),
        ("flow completion exactness", flow_completion),
        ("correlated noise statistics", noise_statistics),
        ("shadow pairing", shadow_pairing),
        ("ablation harness", ablation_harness),
        ("metric sanity", metric_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
