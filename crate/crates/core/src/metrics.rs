//! Reconstruction and temporal-consistency metrics.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowSet, warp};
use crate::fusion::SegmentPlan;
use crate::par::map_range;
use crate::video_io::{Frame, Mask, VideoClip};

pub const PSNR_CAP: f64 = 99.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 1e-4;
const SSIM_C2: f64 = 9e-4;

fn check_same(a: &VideoClip, b: &VideoClip) -> Result<()> {
    if a.len() != b.len() || a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::dims(format!(
            "{}x{}x{}x{} vs {}x{}x{}x{}",
            a.len(),
            a.height(),
            a.width(),
            a.channels(),
            b.len(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Clip-level PSNR over all pixels.
pub fn psnr(a: &VideoClip, b: &VideoClip) -> Result<f64> {
    check_same(a, b)?;
    let total: f64 = a
        .frames()
        .iter()
        .zip(b.frames())
        .map(|(x, y)| mse(x.data(), y.data()))
        .sum();
    Ok(psnr_from_mse(total / a.len() as f64))
}

pub fn psnr_per_frame(a: &VideoClip, b: &VideoClip) -> Result<Vec<f64>> {
    check_same(a, b)?;
    Ok(a.frames()
        .iter()
        .zip(b.frames())
        .map(|(x, y)| psnr_from_mse(mse(x.data(), y.data())))
        .collect())
}

fn gaussian_kernel() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Mean local SSIM of one frame pair over windows fully inside the frame,
/// averaged over channels.
pub fn ssim_frame(a: &Frame, b: &Frame) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::dims("frames differ in shape"));
    }
    let (h, w, c) = (a.height(), a.width(), a.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("{h}x{w} frame is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let k = gaussian_kernel();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut per_channel = 0.0;
    for ch in 0..c {
        let mut total = 0.0;
        for y0 in 0..oh {
            for x0 in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, ki) in k.iter().enumerate() {
                    for (j, kj) in k.iter().enumerate() {
                        let wt = ki * kj;
                        let (p, q) = (a.get(y0 + i, x0 + j, ch), b.get(y0 + i, x0 + j, ch));
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        per_channel += total / (oh * ow) as f64;
    }
    Ok(per_channel / c as f64)
}

pub fn ssim_per_frame(a: &VideoClip, b: &VideoClip) -> Result<Vec<f64>> {
    check_same(a, b)?;
    map_range(a.len(), |f| ssim_frame(a.frame(f), b.frame(f))).into_iter().collect()
}

pub fn ssim(a: &VideoClip, b: &VideoClip) -> Result<f64> {
    let per = ssim_per_frame(a, b)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean squared difference between frame `t + 1` and frame `t` warped
/// along the flow `t + 1 → t`, over covered pixels, averaged over pairs
/// and scaled by 10³.
pub fn warping_error(clip: &VideoClip, flows: &FlowSet) -> Result<f64> {
    let pairs = clip.len().saturating_sub(1);
    if flows.backward.len() != pairs {
        return Err(Error::invalid(format!("expected {pairs} backward flows, got {}", flows.backward.len())));
    }
    if pairs == 0 {
        return Ok(0.0);
    }
    let per_pair = map_range(pairs, |t| -> Result<f64> {
        let warped = warp(clip.frame(t), &flows.backward[t])?;
        let next = clip.frame(t + 1);
        let c = next.channels();
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &cov) in warped.covered.iter().enumerate() {
            if cov {
                for k in 0..c {
                    sum += (warped.frame.data()[i * c + k] - next.data()[i * c + k]).powi(2);
                }
                n += c;
            }
        }
        if n == 0 {
            warn!("frame pair {t}/{} has no covered pixels", t + 1);
            return Ok(0.0);
        }
        Ok(sum / n as f64)
    });
    let total: f64 = per_pair.into_iter().collect::<Result<Vec<_>>>()?.iter().sum();
    Ok(total / pairs as f64 * 1e3)
}

fn frame_mae(a: &Frame, b: &Frame, region: Option<&Mask>) -> f64 {
    let c = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.height() * a.width() {
        if region.is_some_and(|m| !m.get(i / a.width(), i % a.width())) {
            continue;
        }
        for k in 0..c {
            sum += (a.data()[i * c + k] - b.data()[i * c + k]).abs();
        }
        n += c;
    }
    if n == 0 { 0.0 } else { sum / n as f64 }
}

/// `100 · (1 − mean adjacent-frame MAE)`, optionally restricted to a
/// static region.
pub fn temporal_flicker(clip: &VideoClip, static_mask: Option<&Mask>) -> Result<f64> {
    if clip.len() < 2 {
        return Err(Error::invalid("temporal flicker needs at least two frames"));
    }
    if static_mask.is_some_and(|m| m.height() != clip.height() || m.width() != clip.width()) {
        return Err(Error::dims("static mask does not match the clip"));
    }
    let total: f64 = (1..clip.len())
        .map(|t| frame_mae(clip.frame(t - 1), clip.frame(t), static_mask))
        .sum();
    Ok(100.0 * (1.0 - total / (clip.len() - 1) as f64))
}

/// Excess jump at the given boundary frames: the mean over boundaries `b`
/// of the MAE between frames `b` and `b − 1`, minus the same mean over all
/// other `b ≥ 1`, floored at 0.
pub fn seam_score_at(clip: &VideoClip, boundaries: &[usize], region: Option<&Mask>) -> Result<f64> {
    if region.is_some_and(|m| m.height() != clip.height() || m.width() != clip.width()) {
        return Err(Error::dims("seam region does not match the clip"));
    }
    if let Some(&b) = boundaries.iter().find(|&&b| b == 0 || b >= clip.len()) {
        return Err(Error::invalid(format!("boundary frame {b} is outside 1..{}", clip.len())));
    }
    let jumps: Vec<f64> = (1..clip.len())
        .map(|t| frame_mae(clip.frame(t - 1), clip.frame(t), region))
        .collect();
    let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let at: Vec<f64> = (1..clip.len()).filter(|t| boundaries.contains(t)).map(|t| jumps[t - 1]).collect();
    if at.is_empty() {
        return Ok(0.0);
    }
    let away: Vec<f64> = (1..clip.len()).filter(|t| !boundaries.contains(t)).map(|t| jumps[t - 1]).collect();
    Ok((mean(at) - mean(away)).max(0.0))
}

/// [`seam_score_at`] on the plan's stitch points.
pub fn seam_score(clip: &VideoClip, plan: &SegmentPlan, region: Option<&Mask>) -> Result<f64> {
    if plan.frames() != clip.len() {
        return Err(Error::dims(format!("plan covers {} frames, clip has {}", plan.frames(), clip.len())));
    }
    seam_score_at(clip, &plan.boundary_frames(), region)
}

/// Stacks column `column` of every frame: row `t` of the result is frame
/// `t`'s column, top to bottom.
pub fn yt_slice(clip: &VideoClip, column: usize) -> Result<Frame> {
    if column >= clip.width() {
        return Err(Error::invalid(format!("column {column} is outside 0..{}", clip.width())));
    }
    let (h, c) = (clip.height(), clip.channels());
    let mut data = Vec::with_capacity(clip.len() * h * c);
    for f in clip.frames() {
        for y in 0..h {
            for k in 0..c {
                data.push(f.get(y, column, k));
            }
        }
    }
    Frame::new(clip.len(), h, c, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFrame {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// `None` without a reference plate.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub e_warp_x1e3: f64,
    pub tf: f64,
    pub seam: f64,
    pub fusion_ops: usize,
    pub runtime_ms: f64,
    pub per_frame: Option<PerFrame>,
}

impl Report {
    /// Copy with the wall-clock field zeroed, for run comparisons.
    pub fn without_runtime(&self) -> Report {
        Report {
            runtime_ms: 0.0,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionConfig, plan_segments};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn flat_clip(values: &[f64], n: usize) -> VideoClip {
        VideoClip::new(values.iter().map(|&v| Frame::filled(n, n, 1, v)).collect(), 24.0).unwrap()
    }

    fn textured(seed: u64, frames: usize, n: usize) -> VideoClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.5, 0.2).unwrap();
        VideoClip::new(
            (0..frames)
                .map(|_| Frame::from_clamped(n, n, 3, (0..n * n * 3).map(|_| dist.sample(&mut rng)).collect()))
                .collect(),
            24.0,
        )
        .unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = flat_clip(&[0.5, 0.5], 4);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = flat_clip(&[0.5 + 1.0 / 255.0; 2], 4);
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-9);
        let c = flat_clip(&[0.6; 2], 4);
        assert!((psnr(&a, &c).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&a, &flat_clip(&[0.5], 4)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let base = flat_clip(&[0.5; 3], 16);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let dist = Normal::new(0.0, amp).unwrap();
            let noisy = VideoClip::new(
                base.frames()
                    .iter()
                    .map(|f| Frame::from_clamped(16, 16, 1, f.data().iter().map(|v| v + dist.sample(&mut rng)).collect()))
                    .collect(),
                24.0,
            )
            .unwrap();
            let p = psnr(&base, &noisy).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_closed_forms() {
        let a = textured(1, 2, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = textured(2, 2, 16);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ssim(&a, &b).unwrap() <= 1.0);
        let zero = flat_clip(&[0.0], 12);
        let one = flat_clip(&[1.0], 12);
        assert!((ssim(&zero, &one).unwrap() - 1e-4 / (1.0 + 1e-4)).abs() < 1e-12);
        assert!(matches!(ssim(&flat_clip(&[0.0], 8), &flat_clip(&[0.0], 8)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn warping_error_cases() {
        let still = textured(3, 3, 8);
        let frozen = VideoClip::new(vec![still.frame(0).clone(); 3], 24.0).unwrap();
        assert_eq!(warping_error(&frozen, &FlowSet::zeros(3, 8, 8)).unwrap(), 0.0);
        let step = flat_clip(&[0.2, 0.3], 8);
        assert!((warping_error(&step, &FlowSet::zeros(2, 8, 8)).unwrap() - 0.01 * 1e3).abs() < 1e-9);

        let n = 12;
        let pattern = |y: usize, x: usize| ((x * 5 + y * 3) % 7) as f64 / 7.0;
        let moving = VideoClip::new(
            (0..4)
                .map(|t| Frame::new(n, n, 1, (0..n * n).map(|i| pattern(i / n, (i % n + 30 - t) % 30)).collect()).unwrap())
                .collect(),
            24.0,
        )
        .unwrap();
        assert!(warping_error(&moving, &FlowSet::uniform(4, n, n, (1.0, 0.0))).unwrap() < 1e-12);
    }

    #[test]
    fn flicker_cases() {
        assert_eq!(temporal_flicker(&flat_clip(&[0.3; 4], 4), None).unwrap(), 100.0);
        assert_eq!(temporal_flicker(&flat_clip(&[0.0, 1.0, 0.0], 4), None).unwrap(), 0.0);
        assert!((temporal_flicker(&flat_clip(&[0.3, 0.35], 4), None).unwrap() - 95.0).abs() < 1e-9);
        assert!(temporal_flicker(&flat_clip(&[0.3], 4), None).is_err());
        let plate = textured(4, 1, 8);
        let frames = VideoClip::new(vec![plate.frame(0).clone(); 5], 24.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = Normal::new(0.0, 0.05).unwrap();
        let noisy = VideoClip::new(
            frames
                .frames()
                .iter()
                .map(|f| Frame::from_clamped(8, 8, 3, f.data().iter().map(|v| v + dist.sample(&mut rng)).collect()))
                .collect(),
            24.0,
        )
        .unwrap();
        assert!(temporal_flicker(&frames, None).unwrap() >= temporal_flicker(&noisy, None).unwrap());
    }

    #[test]
    fn seam_cases() {
        let plan = plan_segments(36, &FusionConfig::default()).unwrap();
        let bounds = plan.boundary_frames();
        assert_eq!(seam_score(&flat_clip(&[0.4; 36], 4), &plan, None).unwrap(), 0.0);

        let b = bounds[0];
        let stepped = flat_clip(&(0..36).map(|f| if f >= b { 0.6 } else { 0.4 }).collect::<Vec<_>>(), 4);
        let want = 0.2 / bounds.len() as f64;
        assert!((seam_score(&stepped, &plan, None).unwrap() - want).abs() < 1e-12);

        let off = flat_clip(&(0..36).map(|f| if f >= 3 { 0.6 } else { 0.4 }).collect::<Vec<_>>(), 4);
        assert_eq!(seam_score(&off, &plan, None).unwrap(), 0.0);
    }

    #[test]
    fn yt_slice_cases() {
        let still = textured(6, 1, 8);
        let clip = VideoClip::new(vec![still.frame(0).clone(); 4], 24.0).unwrap();
        let s = yt_slice(&clip, 3).unwrap();
        assert_eq!((s.height(), s.width()), (4, 8));
        for t in 1..4 {
            for y in 0..8 {
                assert_eq!(s.get(t, y, 1), s.get(0, y, 1));
            }
        }
        let n = 10;
        let falling = VideoClip::new(
            (0..n).map(|t| Frame::new(n, n, 1, (0..n * n).map(|i| f64::from(u8::from(i / n == t))).collect()).unwrap()).collect(),
            24.0,
        )
        .unwrap();
        let diag = yt_slice(&falling, 4).unwrap();
        for t in 0..n {
            for y in 0..n {
                assert_eq!(diag.get(t, y, 0), f64::from(u8::from(t == y)));
            }
        }
        assert!(yt_slice(&clip, 8).is_err());
    }

    #[test]
    fn report_round_trips_with_stable_fields() {
        let r = Report {
            psnr: Some(40.0),
            ssim: None,
            e_warp_x1e3: 1.5,
            tf: 99.0,
            seam: 0.0,
            fusion_ops: 2,
            runtime_ms: 12.0,
            per_frame: None,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"psnr":40.0,"ssim":null,"e_warp_x1e3":1.5,"tf":99.0,"seam":0.0,"fusion_ops":2,"runtime_ms":12.0,"per_frame":null}"#
        );
        assert_eq!(serde_json::from_str::<Report>(&json).unwrap(), r);
    }
}
