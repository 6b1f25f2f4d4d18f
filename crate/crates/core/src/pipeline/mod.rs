//! End-to-end removal pipeline, ablation harness and report output.

pub mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use web_time::Instant;

use log::{debug, info};
use serde::Serialize;

pub use config::{DenoiserKind, IoPaths, PipelineConfig};

use crate::diffusion::{Denoiser, OracleDenoiser, PriorDenoiser, SeamProbeDenoiser, make_schedule};
use crate::error::{Error, Result, StageExt};
use crate::flow::{FlowSet, estimate_clip_flows, fill_holes, propagate_pixels};
use crate::fusion::{SegmentPlan, init_correlated_noise, run_dual_fusion};
use crate::latent::{BLOCK, LatentClip, decode, encode};
use crate::maskops::{anchor_instance_mask, propagate_masks};
use crate::metrics::{PerFrame, Report, psnr, psnr_per_frame, seam_score_at, ssim, ssim_per_frame, temporal_flicker, warping_error};
use crate::par::map_range;
use crate::refframe::{RefSpec, insert_reference, inpaint_reference, remove_reference, select_reference};
use crate::video_io::{
    Frame, Mask, MaskSeq, VideoClip, apply_mask, downscale_mask, load_clip_dir, load_indexed_masks, load_mask_dir, save_clip_dir,
    save_frame, save_mask_dir, DEFAULT_FPS,
};

/// Where the hole masks come from.
#[derive(Debug, Clone)]
pub enum HoleSource {
    Masks(MaskSeq),
    /// Masks at a few frames, carried to the rest along estimated flow.
    Anchors(Vec<(usize, Mask)>),
}

#[derive(Debug, Clone)]
pub struct InpaintInput {
    pub clip: VideoClip,
    pub holes: HoleSource,
    /// Clean plate; enables the reference metrics and the oracle denoiser.
    pub plate: Option<VideoClip>,
}

/// How often each stage ran.
#[derive(Debug, Default)]
pub struct StageCounters {
    counts: [AtomicUsize; Stage::ALL.len()],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    MaskPropagation,
    FlowEstimation,
    PixelPropagation,
    HoleFill,
    Reference,
    Encode,
    Sampling,
    Decode,
    Composite,
    Metrics,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::MaskPropagation,
        Stage::FlowEstimation,
        Stage::PixelPropagation,
        Stage::HoleFill,
        Stage::Reference,
        Stage::Encode,
        Stage::Sampling,
        Stage::Decode,
        Stage::Composite,
        Stage::Metrics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::MaskPropagation => "mask_propagation",
            Stage::FlowEstimation => "flow_estimation",
            Stage::PixelPropagation => "pixel_propagation",
            Stage::HoleFill => "hole_fill",
            Stage::Reference => "reference",
            Stage::Encode => "encode",
            Stage::Sampling => "sampling",
            Stage::Decode => "decode",
            Stage::Composite => "composite",
            Stage::Metrics => "metrics",
        }
    }
}

impl StageCounters {
    fn hit(&self, s: Stage) {
        self.counts[s as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self, s: Stage) -> usize {
        self.counts[s as usize].load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> BTreeMap<&'static str, usize> {
        Stage::ALL.iter().map(|&s| (s.name(), self.get(s))).collect()
    }
}

#[derive(Debug)]
pub struct InpaintOutput {
    pub clip: VideoClip,
    pub report: Report,
    pub holes: MaskSeq,
    /// Holes left after flow completion; the region actually generated.
    pub residual: MaskSeq,
    pub plan: SegmentPlan,
    pub counters: StageCounters,
}

struct Debug<'a> {
    dir: Option<&'a Path>,
}

impl Debug<'_> {
    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.map(|d| d.join(name))
    }

    fn clip(&self, name: &str, clip: &VideoClip) -> Result<()> {
        if let Some(p) = self.path(name) {
            save_clip_dir(clip, p)?;
        }
        Ok(())
    }

    fn masks(&self, name: &str, masks: &MaskSeq) -> Result<()> {
        if let Some(p) = self.path(name) {
            save_mask_dir(masks, p)?;
        }
        Ok(())
    }

    fn flows(&self, name: &str, flows: &FlowSet) -> Result<()> {
        if let Some(p) = self.path(name) {
            std::fs::create_dir_all(&p)?;
            for f in flows.forward.iter().chain(&flows.backward) {
                f.write_dump(p.join(format!("flow_{:05}_{:05}.bin", f.from_index, f.to_index)))?;
            }
        }
        Ok(())
    }

    fn frame(&self, name: &str, frame: &Frame) -> Result<()> {
        if let Some(p) = self.path(name) {
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent)?;
            }
            save_frame(frame, p)?;
        }
        Ok(())
    }

    fn text(&self, name: &str, text: &str) -> Result<()> {
        if let Some(p) = self.path(name) {
            std::fs::create_dir_all(self.dir.expect("set"))?;
            std::fs::write(p, text)?;
        }
        Ok(())
    }
}

/// Per-pixel weight of the generated content in the composite: 1 inside
/// the hole, falling linearly to 0 over `feather` pixels of Chebyshev
/// distance outside it.
pub fn composite_weights(hole: &Mask, feather: usize) -> Vec<f64> {
    let (h, w) = (hole.height(), hole.width());
    let f = feather as i64;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            if hole.get(y, x) {
                out[y * w + x] = 1.0;
                continue;
            }
            let mut best: Option<i64> = None;
            for dy in -f..=f {
                for dx in -f..=f {
                    if hole.get_signed(y as i64 + dy, x as i64 + dx) {
                        let d = dy.abs().max(dx.abs());
                        best = Some(best.map_or(d, |b| b.min(d)));
                    }
                }
            }
            if let Some(d) = best {
                out[y * w + x] = (feather as f64 + 1.0 - d as f64) / (feather as f64 + 1.0);
            }
        }
    }
    out
}

fn composite(base: &VideoClip, generated: &VideoClip, holes: &MaskSeq, feather: usize) -> Result<VideoClip> {
    let frames = map_range(base.len(), |t| {
        let (a, g) = (base.frame(t), generated.frame(t));
        let weights = composite_weights(holes.mask(t), feather);
        let c = a.channels();
        let data = a
            .data()
            .iter()
            .zip(g.data())
            .enumerate()
            .map(|(i, (&p, &q))| {
                let w = weights[i / c];
                if w == 0.0 { p } else if w == 1.0 { q } else { (1.0 - w) * p + w * q }
            })
            .collect();
        Frame::from_clamped(a.height(), a.width(), c, data)
    });
    base.with_frames(frames)
}

fn resolve_holes(input: &InpaintInput, cfg: &PipelineConfig, counters: &StageCounters) -> Result<MaskSeq> {
    let clip = &input.clip;
    match &input.holes {
        HoleSource::Masks(m) => {
            if !m.matches(clip) {
                return Err(Error::dims("masks do not match the clip"));
            }
            Ok(m.clone())
        }
        HoleSource::Anchors(anchors) => {
            counters.hit(Stage::MaskPropagation);
            propagate_anchor_masks(clip, anchors, cfg)
        }
    }
}

/// Carries anchor masks to every frame along flow estimated on the clip.
pub fn propagate_anchor_masks(clip: &VideoClip, anchors: &[(usize, Mask)], cfg: &PipelineConfig) -> Result<MaskSeq> {
    let flows = estimate_clip_flows(clip, None, &cfg.flow, true)?;
    propagate_masks(clip.len(), anchors, &flows, cfg.mask_dilation)
}

fn build_denoiser(
    cfg: &PipelineConfig,
    plate_latent: Option<&LatentClip>,
    z_orig: &LatentClip,
    noise: &LatentClip,
    abar_start: f64,
) -> Result<Box<dyn Denoiser>> {
    Ok(match cfg.denoiser {
        DenoiserKind::Oracle => Box::new(OracleDenoiser::new(
            plate_latent.ok_or_else(|| Error::invalid("the oracle denoiser needs a clean plate"))?,
        )),
        DenoiserKind::Prior => Box::new(PriorDenoiser::new(z_orig)),
        DenoiserKind::SeamProbe { amplitude } => {
            Box::new(SeamProbeDenoiser::new(z_orig, noise, abar_start, amplitude, cfg.probe_pull)?)
        }
    })
}

/// Runs the whole pipeline in memory.
pub fn run_inpaint(cfg: &PipelineConfig, input: &InpaintInput) -> Result<InpaintOutput> {
    cfg.validate()?;
    match cfg.threads {
        #[cfg(feature = "parallel")]
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?
            .install(|| run_stages(cfg, input)),
        _ => run_stages(cfg, input),
    }
}

fn run_stages(cfg: &PipelineConfig, input: &InpaintInput) -> Result<InpaintOutput> {
    let started = Instant::now();
    let counters = StageCounters::default();
    let dbg = Debug {
        dir: cfg.io.debug_dir.as_deref(),
    };
    dbg.text("config.txt", &cfg.to_config_string())?;
    let clip = &input.clip;
    let (h, w) = (clip.height(), clip.width());
    if let Some(plate) = &input.plate {
        if plate.len() != clip.len() || plate.height() != h || plate.width() != w || plate.channels() != clip.channels() {
            return Err(Error::dims("plate does not match the clip"));
        }
    }

    let holes = resolve_holes(input, cfg, &counters).stage("masks")?;
    dbg.masks("holes", &holes)?;

    let padded = clip.pad_to_multiple(BLOCK);
    let padded_holes = holes.pad_to_multiple(BLOCK);
    let frames = padded.len();

    let (completed, residual) = if cfg.op_completion {
        counters.hit(Stage::FlowEstimation);
        let flows = estimate_clip_flows(&padded, Some(&padded_holes), &cfg.flow, true).stage("flow_estimation")?;
        dbg.flows("flows", &flows)?;
        counters.hit(Stage::PixelPropagation);
        propagate_pixels(&padded, &padded_holes, &flows, cfg.max_chain).stage("pixel_propagation")?
    } else {
        (padded.clone(), padded_holes.clone())
    };
    dbg.clip("completed", &completed)?;
    dbg.masks("residual", &residual)?;

    counters.hit(Stage::HoleFill);
    let filled = map_range(frames, |t| fill_holes(completed.frame(t), residual.mask(t)));
    let filled: Vec<Frame> = filled
        .into_iter()
        .map(|r| r.map(|f| f.frame))
        .collect::<Result<_>>()
        .stage("hole_fill")?;
    let prefilled = padded.with_frames(filled)?;
    dbg.clip("prefilled", &prefilled)?;

    let padded_plate = input.plate.as_ref().map(|p| p.pad_to_multiple(BLOCK));
    let (ext, ext_residual, ext_plate, slot) = if cfg.ref_frame {
        counters.hit(Stage::Reference);
        let index = select_reference(&padded_holes, cfg.ref_policy).stage("reference")?;
        let reference = inpaint_reference(
            padded.frame(index),
            padded_holes.mask(index),
            completed.frame(index),
            residual.mask(index),
        )
        .stage("reference")?
        .frame;
        dbg.frame("reference.png", &reference)?;
        let spec = RefSpec {
            index,
            policy: cfg.ref_policy,
            position: cfg.ref_position,
        };
        let (ext, ext_res, slot) = insert_reference(&prefilled, &residual, &reference, &spec).stage("reference")?;
        let ext_plate = match &padded_plate {
            Some(p) => Some(insert_reference(p, &padded_holes, &reference, &spec)?.0),
            None => None,
        };
        info!("reference frame {index} inserted at slot {slot}");
        (ext, ext_res, ext_plate, Some(slot))
    } else {
        (prefilled.clone(), residual.clone(), padded_plate, None)
    };

    counters.hit(Stage::Encode);
    let z_orig = encode(&ext).stage("encode")?;
    let z_masked = encode(&apply_mask(&ext, &ext_residual)?).stage("encode")?;
    let known = downscale_mask(&ext_residual, BLOCK)?;
    let plate_latent = ext_plate.as_ref().map(encode).transpose()?;

    counters.hit(Stage::Sampling);
    let sched = make_schedule(cfg.train_steps, cfg.inference_steps).stage("sampling")?;
    let noise = init_correlated_noise(
        z_orig.frames(),
        (z_orig.channels(), z_orig.height(), z_orig.width()),
        cfg.fusion.noise_corr,
        cfg.seed,
        clip.fps(),
    )?;
    let denoiser = build_denoiser(cfg, plate_latent.as_ref(), &z_orig, &noise, sched.step_levels(0).0).stage("sampling")?;
    let reinject = cfg.known_reinjection.then_some(&z_orig);
    let fused = run_dual_fusion(&noise, &known, &z_masked, denoiser.as_ref(), &sched, &cfg.fusion, reinject).stage("sampling")?;
    debug!("{} windows, {} fusion passes", fused.plan.windows().len(), fused.fusion_ops);

    counters.hit(Stage::Decode);
    let latent = match slot {
        Some(s) => remove_reference(&fused.latent, s)?,
        None => fused.latent.clone(),
    };
    let generated = decode(&latent).stage("decode")?.crop(h, w);
    dbg.clip("generated", &generated)?;

    counters.hit(Stage::Composite);
    let base = completed.crop(h, w);
    let residual_out = residual.crop(h, w);
    let out = composite(&base, &generated, &residual_out, cfg.composite_feather).stage("composite")?;
    dbg.clip("output", &out)?;

    counters.hit(Stage::Metrics);
    let boundaries = output_boundaries(&fused.plan, slot, clip.len());
    let region = union_region(&holes);
    let report = build_report(cfg, &out, input.plate.as_ref(), &boundaries, region.as_ref(), fused.fusion_ops, started)
        .stage("metrics")?;
    dbg.text("report.json", &serde_json::to_string_pretty(&report)?)?;
    dbg.text(
        "stage_counts.json",
        &serde_json::to_string_pretty(&counters.snapshot())?,
    )?;
    Ok(InpaintOutput {
        clip: out,
        report,
        holes,
        residual: residual_out,
        plan: fused.plan,
        counters,
    })
}

/// Output frames `b ≥ 1` taken from a different window than `b − 1`, with
/// the reference slot skipped.
pub fn output_boundaries(plan: &SegmentPlan, slot: Option<usize>, frames: usize) -> Vec<usize> {
    let ext = |f: usize| match slot {
        Some(s) if f >= s => f + 1,
        _ => f,
    };
    let owner = |f: usize| plan.owner(ext(f)).map(|o| o.0);
    (1..frames).filter(|&b| owner(b) != owner(b - 1)).collect()
}

fn union_region(holes: &MaskSeq) -> Option<Mask> {
    let mut acc = Mask::empty(holes.height(), holes.width());
    for m in holes.masks() {
        acc = acc.union(m);
    }
    (!acc.is_empty()).then_some(acc)
}

fn build_report(
    cfg: &PipelineConfig,
    out: &VideoClip,
    plate: Option<&VideoClip>,
    boundaries: &[usize],
    region: Option<&Mask>,
    fusion_ops: usize,
    started: Instant,
) -> Result<Report> {
    let flows = estimate_clip_flows(out, None, &cfg.flow, true)?;
    let (psnr_v, ssim_v, per_frame) = match plate {
        Some(p) => {
            let can_ssim = out.height() >= 11 && out.width() >= 11;
            let per_ssim = if can_ssim { ssim_per_frame(out, p)? } else { Vec::new() };
            (
                Some(psnr(out, p)?),
                can_ssim.then(|| ssim(out, p)).transpose()?,
                Some(PerFrame {
                    psnr: psnr_per_frame(out, p)?,
                    ssim: per_ssim,
                }),
            )
        }
        None => (None, None, None),
    };
    let tf = if out.len() >= 2 { temporal_flicker(out, None)? } else { 100.0 };
    Ok(Report {
        psnr: psnr_v,
        ssim: ssim_v,
        e_warp_x1e3: warping_error(out, &flows)?,
        tf,
        seam: seam_score_at(out, boundaries, region)?,
        fusion_ops,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        per_frame,
    })
}

/// Report for an already produced clip. Seam boundaries follow the window
/// plan `cfg` would use, with the reference slot taken from `holes` when
/// the reference stage is on.
pub fn evaluate_clip(cfg: &PipelineConfig, out: &VideoClip, plate: Option<&VideoClip>, holes: Option<&MaskSeq>) -> Result<Report> {
    cfg.validate()?;
    let started = Instant::now();
    let slot = match (cfg.ref_frame, holes) {
        (false, _) => None,
        (true, Some(h)) => {
            let index = select_reference(h, cfg.ref_policy)?;
            Some(RefSpec { index, policy: cfg.ref_policy, position: cfg.ref_position }.slot())
        }
        (true, None) => Some(0),
    };
    let plan = crate::fusion::plan_segments(out.len() + usize::from(slot.is_some()), &cfg.fusion)?;
    let boundaries = output_boundaries(&plan, slot, out.len());
    let region = holes.and_then(union_region);
    build_report(cfg, out, plate, &boundaries, region.as_ref(), crate::fusion::count_fusion_ops(&cfg.fusion, cfg.inference_steps, false), started)
}

/// Loads inputs from `cfg.io`: `frames` is required, plus either `masks`
/// or `anchors`; `plate` is optional.
pub fn load_input(cfg: &PipelineConfig) -> Result<InpaintInput> {
    let frames = cfg
        .io
        .frames
        .as_ref()
        .ok_or_else(|| Error::invalid("io.frames is not set"))?;
    let clip = load_clip_dir(frames, DEFAULT_FPS)?;
    let holes = match (&cfg.io.masks, &cfg.io.anchors) {
        (Some(m), _) => HoleSource::Masks(load_mask_dir(m)?),
        (None, Some(a)) => HoleSource::Anchors(load_indexed_masks(a)?),
        (None, None) => return Err(Error::invalid("set io.masks or io.anchors")),
    };
    let plate = cfg.io.plate.as_ref().map(|p| load_clip_dir(p, DEFAULT_FPS)).transpose()?;
    Ok(InpaintInput { clip, holes, plate })
}

/// Loads inputs from disk, runs, and writes `io.out` frames and the
/// `io.report` JSON when set.
pub fn run_inpaint_dirs(cfg: &PipelineConfig) -> Result<InpaintOutput> {
    let input = load_input(cfg)?;
    let out = run_inpaint(cfg, &input)?;
    if let Some(dir) = &cfg.io.out {
        save_clip_dir(&out.clip, dir)?;
    }
    if let Some(path) = &cfg.io.report {
        emit_report(&Emit::Single(&out.report), path)?;
    }
    Ok(out)
}

/// Removal masks for anchor frames built from person and shadow
/// segmentations, optionally attaching paired shadows.
pub fn anchor_masks(
    humans: &MaskSeq,
    shadows: &MaskSeq,
    anchors: &[usize],
    cfg: &PipelineConfig,
) -> Result<Vec<(usize, Mask)>> {
    anchors
        .iter()
        .map(|&i| {
            if i >= humans.len() || i >= shadows.len() {
                return Err(Error::invalid(format!("anchor {i} is outside the clip")));
            }
            let pair = cfg.pair_shadows.then_some(&cfg.pairing);
            let (mask, _) = anchor_instance_mask(i, humans.mask(i), shadows.mask(i), pair)?;
            Ok((i, mask))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub config_id: String,
    pub op_completion: bool,
    pub ref_frame: bool,
    pub report: Report,
}

/// The four stage combinations `(op_completion, ref_frame)` in table order.
pub const DEFAULT_TOGGLES: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

pub fn toggle_id(op: bool, r: bool) -> String {
    format!("{}/{}", if op { "OP" } else { "-" }, if r { "R" } else { "-" })
}

pub fn run_ablation(base: &PipelineConfig, input: &InpaintInput, toggles: &[(bool, bool)]) -> Result<Vec<AblationRow>> {
    if toggles.is_empty() {
        return Err(Error::invalid("ablation needs at least one configuration"));
    }
    toggles
        .iter()
        .map(|&(op, r)| {
            let cfg = PipelineConfig {
                op_completion: op,
                ref_frame: r,
                ..base.clone()
            };
            let out = run_inpaint(&cfg, input)?;
            Ok(AblationRow {
                config_id: toggle_id(op, r),
                op_completion: op,
                ref_frame: r,
                report: out.report,
            })
        })
        .collect()
}

pub enum Emit<'a> {
    Single(&'a Report),
    Table(&'a [AblationRow]),
}

pub const CSV_COLUMNS: [&str; 8] = ["config_id", "psnr", "ssim", "e_warp_x1e3", "tf", "seam", "fusion_ops", "runtime_ms"];

/// Writes a report as JSON or a table as CSV.
pub fn emit_report(what: &Emit<'_>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    match what {
        Emit::Single(r) => std::fs::write(path, serde_json::to_string_pretty(r)? + "\n")?,
        Emit::Table(rows) => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(CSV_COLUMNS)?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for row in rows.iter() {
                let r = &row.report;
                w.write_record([
                    row.config_id.clone(),
                    opt(r.psnr),
                    opt(r.ssim),
                    r.e_warp_x1e3.to_string(),
                    r.tf.to_string(),
                    r.seam.to_string(),
                    r.fusion_ops.to_string(),
                    r.runtime_ms.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Background, SceneSpec, ShadowSpec, Shape, SpriteSpec, generate_scene};

    fn small_scene(frames: usize, pan: (i64, i64)) -> crate::synth::Scene {
        generate_scene(&SceneSpec {
            seed: 3,
            frames,
            height: 32,
            width: 40,
            background: Background::Smooth,
            camera_pan: pan,
            sprites: vec![SpriteSpec {
                shape: Shape::Rect,
                size: (8, 10),
                position: (6, 8),
                velocity: (1, 0),
                color: Some([0.9, 0.2, 0.2]),
                stripes: None,
                shadow: Some(ShadowSpec {
                    offset: (0, 0),
                    scale: 0.4,
                    darkening: 0.5,
                }),
            }],
            fps: 24.0,
        })
        .unwrap()
    }

    fn input(scene: &crate::synth::Scene) -> InpaintInput {
        InpaintInput {
            clip: scene.clip.clone(),
            holes: HoleSource::Masks(scene.removal_masks()),
            plate: Some(scene.plate.clone()),
        }
    }

    #[test]
    fn feather_weights() {
        let hole = Mask::from_fn(9, 9, |y, x| y == 4 && x == 4);
        let w = composite_weights(&hole, 2);
        assert_eq!(w[4 * 9 + 4], 1.0);
        assert!((w[4 * 9 + 5] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[2 * 9 + 6] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(w[9 + 4], 0.0);
        assert!(composite_weights(&hole, 0).iter().filter(|v| **v > 0.0).count() == 1);
    }

    #[test]
    fn empty_hole_passes_input_through() {
        let scene = small_scene(6, (0, 0));
        let inp = InpaintInput {
            clip: scene.clip.clone(),
            holes: HoleSource::Masks(MaskSeq::empty(6, 32, 40)),
            plate: None,
        };
        for kind in [DenoiserKind::Prior, DenoiserKind::SeamProbe { amplitude: 0.3 }] {
            let cfg = PipelineConfig { denoiser: kind, ..Default::default() };
            let out = run_inpaint(&cfg, &inp).unwrap();
            assert_eq!(out.clip, scene.clip);
            assert_eq!(out.report.psnr, None);
        }
    }

    #[test]
    fn stages_can_be_disabled() {
        let scene = small_scene(6, (0, 0));
        let cfg = PipelineConfig {
            op_completion: false,
            ref_frame: false,
            ..Default::default()
        };
        let out = run_inpaint(&cfg, &input(&scene)).unwrap();
        assert_eq!(out.counters.get(Stage::FlowEstimation), 0);
        assert_eq!(out.counters.get(Stage::PixelPropagation), 0);
        assert_eq!(out.counters.get(Stage::Reference), 0);
        assert_eq!(out.counters.get(Stage::Sampling), 1);
        assert_eq!(out.clip.len(), 6);
        assert!(out.report.psnr.unwrap() > 15.0);

        let full = run_inpaint(&PipelineConfig::default(), &input(&scene)).unwrap();
        assert_eq!(full.counters.get(Stage::FlowEstimation), 1);
        assert_eq!(full.counters.get(Stage::Reference), 1);
    }

    #[test]
    fn composite_keeps_far_pixels() {
        let scene = small_scene(5, (1, 0));
        let cfg = PipelineConfig::default();
        let out = run_inpaint(&cfg, &input(&scene)).unwrap();
        for t in 0..5 {
            let weights = composite_weights(out.residual.mask(t), cfg.composite_feather);
            let (a, b) = (scene.clip.frame(t), out.clip.frame(t));
            for (i, wt) in weights.iter().enumerate() {
                if *wt == 0.0 && !out.holes.mask(t).get(i / 40, i % 40) {
                    for c in 0..3 {
                        assert_eq!(a.data()[i * 3 + c], b.data()[i * 3 + c]);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_needs_a_plate() {
        let scene = small_scene(4, (0, 0));
        let cfg = PipelineConfig { denoiser: DenoiserKind::Oracle, ..Default::default() };
        let inp = InpaintInput { plate: None, ..input(&scene) };
        assert!(matches!(run_inpaint(&cfg, &inp), Err(Error::Stage { stage: "sampling", .. })));
    }

    #[test]
    fn anchors_drive_mask_propagation() {
        let scene = small_scene(6, (0, 0));
        let masks = scene.removal_masks();
        let inp = InpaintInput {
            holes: HoleSource::Anchors(vec![(0, masks.mask(0).clone()), (5, masks.mask(5).clone())]),
            ..input(&scene)
        };
        let out = run_inpaint(&PipelineConfig::default(), &inp).unwrap();
        assert_eq!(out.counters.get(Stage::MaskPropagation), 1);
        assert_eq!(out.holes.mask(0), masks.mask(0));
        for t in 0..6 {
            assert!(masks.mask(t).intersection(out.holes.mask(t)).count() * 10 >= masks.mask(t).count() * 9);
        }
    }

    #[test]
    fn ablation_rows_and_csv() {
        let scene = small_scene(4, (1, 0));
        let rows = run_ablation(&PipelineConfig::default(), &input(&scene), &DEFAULT_TOGGLES).unwrap();
        let ids: Vec<_> = rows.iter().map(|r| r.config_id.as_str()).collect();
        assert_eq!(ids, ["-/-", "OP/-", "-/R", "OP/R"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_report(&Emit::Table(&rows), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("config_id,psnr,ssim,e_warp_x1e3,tf,seam,fusion_ops,runtime_ms\n"));
        assert_eq!(text.lines().count(), 5);
        emit_report(&Emit::Table(&[]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);

        let json = dir.path().join("r.json");
        emit_report(&Emit::Single(&rows[3].report), &json).unwrap();
        let back: Report = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(back, rows[3].report);
    }

    #[test]
    fn debug_dir_receives_intermediates() {
        let scene = small_scene(4, (1, 0));
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.io.debug_dir = Some(dir.path().to_path_buf());
        run_inpaint(&cfg, &input(&scene)).unwrap();
        for name in ["holes", "completed", "residual", "prefilled", "generated", "output", "flows", "reference.png", "report.json", "stage_counts.json", "config.txt"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }
}
