//! Overlapping window denoising for clips longer than one window.
//!
//! Two streams of windows cover the clip, the second shifted against the
//! first. Windows denoise independently and are blended only at selected
//! steps. The output takes each frame from the window in which it sits
//! most centrally, so without blending the window borders show.

use std::collections::BTreeSet;

use ndarray::{Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffusion::{Conditioning, Denoiser, Schedule, WindowInfo, step_window};
use crate::error::{Error, Result};
use crate::latent::LatentClip;
use crate::par::map_range;
use crate::video_io::KnownMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Contiguous,
    /// Windows over the cosets `{f : f ≡ r (mod n)}`.
    Strided(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub window_len: usize,
    pub stride: usize,
    pub offset: usize,
    /// 1-based step ordinals after which windows are blended.
    pub fusion_steps: BTreeSet<usize>,
    pub noise_corr: f64,
    pub mode: FusionMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            window_len: 24,
            stride: 12,
            offset: 6,
            fusion_steps: BTreeSet::from([1, 7]),
            noise_corr: 0.9,
            mode: FusionMode::Contiguous,
        }
    }
}

impl FusionConfig {
    /// Blending after every step.
    pub fn every_step(mut self, inference_steps: usize) -> Self {
        self.fusion_steps = (1..=inference_steps).collect();
        self
    }

    pub fn validate(&self, inference_steps: usize) -> Result<()> {
        if self.stride == 0 || self.stride > self.window_len {
            return Err(Error::invalid("need 1 <= stride <= window_len"));
        }
        if self.offset >= self.stride {
            return Err(Error::invalid("need offset < stride"));
        }
        if let Some(&s) = self.fusion_steps.iter().find(|&&s| s == 0 || s > inference_steps) {
            return Err(Error::invalid(format!("fusion step {s} is outside 1..={inference_steps}")));
        }
        if !(0.0..=1.0).contains(&self.noise_corr) {
            return Err(Error::invalid("noise correlation must be in [0, 1]"));
        }
        if self.mode == FusionMode::Strided(0) {
            return Err(Error::invalid("strided mode needs n >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub stream: Stream,
    /// Frame indices in window order.
    pub frames: Vec<usize>,
    /// Normalised blend weight of each frame, aligned with `frames`.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    frames: usize,
    /// Sorted by first frame, stream A first on ties.
    windows: Vec<Window>,
}

impl SegmentPlan {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn stream(&self, s: Stream) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(move |w| w.stream == s)
    }

    /// `(window index, position in window)` for every window holding `f`.
    pub fn covering(&self, f: usize) -> Vec<(usize, usize)> {
        self.windows
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.frames.iter().position(|&g| g == f).map(|p| (i, p)))
            .collect()
    }

    /// The window a frame is taken from in the output: the covering window
    /// with the largest weight, the earlier one on ties.
    pub fn owner(&self, f: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for (wi, p) in self.covering(f) {
            if best.is_none_or(|(bw, bp)| self.windows[wi].weights[p] > self.windows[bw].weights[bp]) {
                best = Some((wi, p));
            }
        }
        best
    }

    /// Frames `b ≥ 1` taken from a different window than `b − 1`.
    pub fn boundary_frames(&self) -> Vec<usize> {
        let owners: Vec<Option<usize>> = (0..self.frames).map(|f| self.owner(f).map(|o| o.0)).collect();
        (1..self.frames).filter(|&b| owners[b] != owners[b - 1]).collect()
    }
}

/// Start frames of the contiguous streams over `n` frames.
fn stream_starts(n: usize, cfg: &FusionConfig) -> (Vec<usize>, Vec<usize>) {
    let len = cfg.window_len;
    if n <= len {
        return (vec![0], Vec::new());
    }
    let mut a = vec![0];
    let mut s = 0;
    while s + len < n {
        s = (s + cfg.stride).min(n - len);
        a.push(s);
    }
    let b = a
        .iter()
        .map(|s| s + cfg.offset)
        .filter(|s| s + len <= n)
        .filter(|_| cfg.offset > 0)
        .collect();
    (a, b)
}

/// Centre-peaked linear ramp: 1 at the centre of a window of `n` frames,
/// `1 / n` at its ends.
pub fn ramp_weight(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let c = (n - 1) as f64 / 2.0;
    1.0 - (1.0 - 1.0 / n as f64) * (i as f64 - c).abs() / c
}

pub fn plan_segments(frames: usize, cfg: &FusionConfig) -> Result<SegmentPlan> {
    if frames == 0 {
        return Err(Error::invalid("a segment plan needs at least one frame"));
    }
    if cfg.stride == 0 || cfg.stride > cfg.window_len || cfg.offset >= cfg.stride {
        return Err(Error::invalid("need 1 <= stride <= window_len and offset < stride"));
    }
    let (cosets, step) = match cfg.mode {
        FusionMode::Contiguous => (1, 1),
        FusionMode::Strided(0) => return Err(Error::invalid("strided mode needs n >= 1")),
        FusionMode::Strided(n) => (n.min(frames), n),
    };
    let mut windows = Vec::new();
    for r in 0..cosets {
        let members: Vec<usize> = (r..frames).step_by(step).collect();
        let (a, b) = stream_starts(members.len(), cfg);
        let len = cfg.window_len.min(members.len());
        for (stream, starts) in [(Stream::A, a), (Stream::B, b)] {
            for s in starts {
                windows.push(Window {
                    stream,
                    frames: members[s..s + len].to_vec(),
                    weights: (0..len).map(|i| ramp_weight(i, len)).collect(),
                });
            }
        }
    }
    windows.sort_by_key(|w| (w.frames[0], w.stream == Stream::B));
    let mut totals = vec![0.0; frames];
    for w in &windows {
        for (&f, &wt) in w.frames.iter().zip(&w.weights) {
            totals[f] += wt;
        }
    }
    if let Some(f) = totals.iter().position(|&t| t == 0.0) {
        return Err(Error::PlanViolation(format!("frame {f} is not covered")));
    }
    for w in &mut windows {
        for (&f, wt) in w.frames.iter().zip(w.weights.iter_mut()) {
            *wt /= totals[f];
        }
    }
    Ok(SegmentPlan { frames, windows })
}

/// AR(1) noise along time: unit marginal variance and adjacent-frame
/// correlation `rho`.
pub fn init_correlated_noise(frames: usize, (c, h, w): (usize, usize, usize), rho: f64, seed: u64, fps: f64) -> Result<LatentClip> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid("noise correlation must be in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = (1.0 - rho * rho).sqrt();
    let mut out = Array4::<f64>::zeros((frames, c, h, w));
    for f in 0..frames {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    out[[f, ci, y, x]] = if f == 0 { xi } else { rho * out[[f - 1, ci, y, x]] + fresh * xi };
                }
            }
        }
    }
    LatentClip::new(out, fps)
}

/// Weighted per-frame average of window states, summed in plan order.
/// Elements on which every covering window agrees are copied unchanged.
pub fn blend_windows(window_latents: &[Array4<f64>], plan: &SegmentPlan) -> Result<Array4<f64>> {
    if window_latents.len() != plan.windows.len() {
        return Err(Error::PlanViolation(format!(
            "{} window states for {} windows",
            window_latents.len(),
            plan.windows.len()
        )));
    }
    let first = window_latents
        .first()
        .ok_or_else(|| Error::PlanViolation("plan has no windows".into()))?;
    let (c, h, w) = (first.shape()[1], first.shape()[2], first.shape()[3]);
    for (lat, win) in window_latents.iter().zip(&plan.windows) {
        if lat.shape() != [win.frames.len(), c, h, w] {
            return Err(Error::PlanViolation(format!("window state shape {:?}", lat.shape())));
        }
    }
    let mut out = Array4::<f64>::zeros((plan.frames, c, h, w));
    for f in 0..plan.frames {
        let cover = plan.covering(f);
        if cover.is_empty() {
            return Err(Error::PlanViolation(format!("frame {f} is not covered")));
        }
        let views: Vec<_> = cover
            .iter()
            .map(|&(wi, p)| (plan.windows[wi].weights[p], window_latents[wi].index_axis(Axis(0), p)))
            .collect();
        for ((ci, y, x), o) in out.index_axis_mut(Axis(0), f).indexed_iter_mut() {
            let v0 = views[0].1[[ci, y, x]];
            if views.iter().all(|(_, v)| v[[ci, y, x]] == v0) {
                *o = v0;
            } else {
                *o = views.iter().map(|(wt, v)| wt * v[[ci, y, x]]).sum();
            }
        }
    }
    Ok(out)
}

/// Stitches window states, taking each frame from its
/// [`SegmentPlan::owner`].
pub fn assemble_windows(window_latents: &[Array4<f64>], plan: &SegmentPlan) -> Result<Array4<f64>> {
    if window_latents.len() != plan.windows.len() || window_latents.is_empty() {
        return Err(Error::PlanViolation("window states do not match the plan".into()));
    }
    let s = window_latents[0].shape();
    let mut out = Array4::<f64>::zeros((plan.frames, s[1], s[2], s[3]));
    for f in 0..plan.frames {
        let (wi, p) = plan.owner(f).ok_or_else(|| Error::PlanViolation(format!("frame {f} is not covered")))?;
        let src = window_latents[wi].index_axis(Axis(0), p);
        if src.shape() != &s[1..] {
            return Err(Error::PlanViolation(format!("window state shape {:?}", window_latents[wi].shape())));
        }
        out.index_axis_mut(Axis(0), f).assign(&src);
    }
    Ok(out)
}

fn scatter(clip: &Array4<f64>, plan: &SegmentPlan) -> Vec<Array4<f64>> {
    plan.windows.iter().map(|w| clip.select(Axis(0), &w.frames)).collect()
}

#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub latent: LatentClip,
    pub plan: SegmentPlan,
    /// Blending passes performed along the trajectory.
    pub fusion_ops: usize,
}

/// Denoises every window of the plan, blending at the configured step
/// ordinals, and stitches the result with [`assemble_windows`]. Windows
/// run concurrently between blends.
#[allow(clippy::too_many_arguments)]
pub fn run_dual_fusion(
    z_t: &LatentClip,
    known: &KnownMap,
    z_masked: &LatentClip,
    denoiser: &dyn Denoiser,
    sched: &Schedule,
    cfg: &FusionConfig,
    reinject_from: Option<&LatentClip>,
) -> Result<FusionOutcome> {
    cfg.validate(sched.inference_steps())?;
    let shape = z_t.data().shape();
    if z_masked.data().shape() != shape || known.shape() != [shape[0], shape[2], shape[3]] {
        return Err(Error::dims("fusion conditioning differs in shape from z_T"));
    }
    if reinject_from.is_some_and(|o| o.data().shape() != shape) {
        return Err(Error::dims("reinjection source differs in shape"));
    }
    let plan = plan_segments(z_t.frames(), cfg)?;
    let cond = Conditioning {
        known,
        z_masked: z_masked.data(),
        reinject: reinject_from.map(|o| (o.data(), z_t.data())),
    };
    let mut states = scatter(z_t.data(), &plan);
    let mut fusion_ops = 0;
    for k in 0..sched.inference_steps() {
        let stepped = map_range(states.len(), |i| {
            let mut z = states[i].clone();
            let info = WindowInfo {
                frames: &plan.windows[i].frames,
                ordinal: i,
            };
            step_window(&mut z, info, &cond, denoiser, sched, k).map(|_| z)
        });
        states = stepped.into_iter().collect::<Result<_>>()?;
        if cfg.fusion_steps.contains(&(k + 1)) {
            states = scatter(&blend_windows(&states, &plan)?, &plan);
            fusion_ops += 1;
        }
    }
    let latent = LatentClip::new(assemble_windows(&states, &plan)?, z_t.fps())?;
    Ok(FusionOutcome {
        latent,
        plan,
        fusion_ops,
    })
}

/// Blending passes per trajectory: the configured steps, or every step
/// for the progressive baseline.
pub fn count_fusion_ops(cfg: &FusionConfig, inference_steps: usize, baseline: bool) -> usize {
    if baseline {
        inference_steps
    } else {
        cfg.fusion_steps.iter().filter(|&&s| s >= 1 && s <= inference_steps).count()
    }
}
