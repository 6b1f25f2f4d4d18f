//! Browser bindings: scene removal with stage toggles, the window plan
//! explorer and correlated-noise statistics.

use std::collections::BTreeSet;

use serde_json::json;
use wasm_bindgen::prelude::*;

use vidfill::fusion::{FusionConfig, Stream, init_correlated_noise, plan_segments};
use vidfill::metrics::yt_slice;
use vidfill::pipeline::{DenoiserKind, HoleSource, InpaintInput, PipelineConfig, run_inpaint};
use vidfill::synth::{Scene, SceneSpec, generate_scene};
use vidfill::video_io::{Frame, Mask, VideoClip};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn rgba(frame: &Frame) -> Vec<u8> {
    let c = frame.channels();
    frame
        .data()
        .chunks(c)
        .flat_map(|px| {
            let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
            let (r, g, b) = if c >= 3 { (px[0], px[1], px[2]) } else { (px[0], px[0], px[0]) };
            [q(r), q(g), q(b), 255]
        })
        .collect()
}

fn mask_rgba(mask: &Mask) -> Vec<u8> {
    mask.values().iter().flat_map(|&v| if v != 0 { [255, 64, 64, 255] } else { [0, 0, 0, 255] }).collect()
}

fn parse_steps(text: &str) -> Result<BTreeSet<usize>, JsError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(js_err))
        .collect()
}

/// A synthetic scene and the latest removal result.
#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
    output: Option<VideoClip>,
    residual: Option<Vec<Mask>>,
}

#[wasm_bindgen]
impl Demo {
    /// A benchmark-suite scene; `frames` overrides its length.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, frames: usize) -> Result<Demo, JsError> {
        let spec = SceneSpec {
            frames: frames.max(1),
            ..SceneSpec::suite(seed)
        };
        Ok(Demo {
            scene: generate_scene(&spec).map_err(js_err)?,
            output: None,
            residual: None,
        })
    }

    pub fn width(&self) -> usize {
        self.scene.clip.width()
    }

    pub fn height(&self) -> usize {
        self.scene.clip.height()
    }

    pub fn frames(&self) -> usize {
        self.scene.clip.len()
    }

    /// Runs the pipeline and returns the report as JSON. `denoiser` is
    /// `prior`, `oracle` or `probe`; `fusion_steps` is a comma list.
    pub fn run(&mut self, op: bool, reference: bool, denoiser: &str, amplitude: f64, fusion_steps: &str, seed: u64) -> Result<String, JsError> {
        let mut cfg = PipelineConfig {
            op_completion: op,
            ref_frame: reference,
            seed,
            threads: Some(1),
            denoiser: match denoiser {
                "oracle" => DenoiserKind::Oracle,
                "probe" => DenoiserKind::SeamProbe { amplitude },
                _ => DenoiserKind::Prior,
            },
            ..Default::default()
        };
        cfg.fusion.fusion_steps = parse_steps(fusion_steps)?;
        let input = InpaintInput {
            clip: self.scene.clip.clone(),
            holes: HoleSource::Masks(self.scene.removal_masks()),
            plate: Some(self.scene.plate.clone()),
        };
        let out = run_inpaint(&cfg, &input).map_err(js_err)?;
        let mut report = serde_json::to_value(&out.report).map_err(js_err)?;
        report["residual_pixels"] = json!(out.residual.hole_count());
        report["hole_pixels"] = json!(out.holes.hole_count());
        self.residual = Some(out.residual.into_masks());
        self.output = Some(out.clip);
        Ok(report.to_string())
    }

    /// RGBA pixels of `input`, `plate`, `output`, `mask` or `residual` at frame `t`.
    pub fn frame_rgba(&self, which: &str, t: usize) -> Result<Vec<u8>, JsError> {
        if t >= self.frames() {
            return Err(JsError::new("frame index out of range"));
        }
        Ok(match which {
            "input" => rgba(self.scene.clip.frame(t)),
            "plate" => rgba(self.scene.plate.frame(t)),
            "mask" => mask_rgba(self.scene.removal_masks().mask(t)),
            "output" => rgba(self.output.as_ref().ok_or_else(|| JsError::new("run first"))?.frame(t)),
            "residual" => mask_rgba(&self.residual.as_ref().ok_or_else(|| JsError::new("run first"))?[t]),
            other => return Err(JsError::new(&format!("unknown layer `{other}`"))),
        })
    }

    /// RGBA of the time-by-row slice through `column`: one row per frame.
    pub fn slice_rgba(&self, which: &str, column: usize) -> Result<Vec<u8>, JsError> {
        let clip = match which {
            "input" => &self.scene.clip,
            "plate" => &self.scene.plate,
            _ => self.output.as_ref().ok_or_else(|| JsError::new("run first"))?,
        };
        Ok(rgba(&yt_slice(clip, column).map_err(js_err)?))
    }
}

/// The two-stream window layout as JSON: windows with their frames and
/// weights, and the frames where the stitched output changes window.
#[wasm_bindgen]
pub fn fusion_plan(frames: usize, window_len: usize, stride: usize, offset: usize) -> Result<String, JsError> {
    let cfg = FusionConfig {
        window_len,
        stride,
        offset,
        ..Default::default()
    };
    let plan = plan_segments(frames, &cfg).map_err(js_err)?;
    let windows: Vec<_> = plan
        .windows()
        .iter()
        .map(|w| {
            json!({
                "stream": if w.stream == Stream::A { "A" } else { "B" },
                "first": w.frames[0],
                "last": w.frames[w.frames.len() - 1],
                "weights": w.weights,
            })
        })
        .collect();
    Ok(json!({ "frames": frames, "windows": windows, "boundaries": plan.boundary_frames() }).to_string())
}

/// Empirical variance per frame and correlation per frame lag of the
/// correlated initial noise, as JSON.
#[wasm_bindgen]
pub fn noise_stats(rho: f64, seed: u64, frames: usize) -> Result<String, JsError> {
    let z = init_correlated_noise(frames.max(2), (4, 24, 24), rho, seed, 24.0).map_err(js_err)?;
    let flat: Vec<Vec<f64>> = z.data().outer_iter().map(|f| f.iter().copied().collect()).collect();
    let n = flat[0].len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let var: Vec<f64> = flat
        .iter()
        .map(|f| {
            let m = mean(f);
            f.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .collect();
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    let lags: Vec<f64> = (1..flat.len().min(8))
        .map(|lag| (lag..flat.len()).map(|t| corr(&flat[t - lag], &flat[t])).sum::<f64>() / (flat.len() - lag) as f64)
        .collect();
    Ok(json!({ "variance": var, "lag_correlation": lags }).to_string())
}
