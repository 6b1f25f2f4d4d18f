//! Pipeline configuration and its text format.
//!
//! The format is line based. Each non-blank line is `key = value`; a `#`
//! at the start of a line or after whitespace begins a comment. Keys are
//! dotted names from the table in [`PipelineConfig::to_config_string`],
//! values are booleans (`true`/`false`), integers, reals, bare words, or
//! comma-separated lists of integers (an empty value is an empty list).
//! Unknown keys and repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::diffusion::{DEFAULT_INFERENCE_STEPS, DEFAULT_PROBE_PULL, DEFAULT_TRAIN_STEPS};
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::fusion::{FusionConfig, FusionMode};
use crate::maskops::PairingParams;
use crate::refframe::{InsertPosition, RefPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DenoiserKind {
    /// Steers toward the encoded clean plate; needs a plate.
    Oracle,
    Prior,
    SeamProbe { amplitude: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoPaths {
    pub frames: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub plate: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub debug_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub io: IoPaths,
    pub seed: u64,
    /// `None` uses the global thread pool.
    pub threads: Option<usize>,
    pub op_completion: bool,
    pub ref_frame: bool,
    pub ref_policy: RefPolicy,
    pub ref_position: InsertPosition,
    pub composite_feather: usize,
    pub mask_dilation: usize,
    pub pair_shadows: bool,
    pub pairing: PairingParams,
    pub flow: FlowParams,
    pub max_chain: usize,
    pub train_steps: usize,
    pub inference_steps: usize,
    pub known_reinjection: bool,
    pub denoiser: DenoiserKind,
    pub probe_pull: f64,
    pub fusion: FusionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            io: IoPaths::default(),
            seed: 0,
            threads: None,
            op_completion: true,
            ref_frame: true,
            ref_policy: RefPolicy::MinHoleArea,
            ref_position: InsertPosition::Prepend,
            composite_feather: 2,
            mask_dilation: 2,
            pair_shadows: true,
            pairing: PairingParams::default(),
            flow: FlowParams::default(),
            max_chain: 64,
            train_steps: DEFAULT_TRAIN_STEPS,
            inference_steps: DEFAULT_INFERENCE_STEPS,
            known_reinjection: true,
            denoiser: DenoiserKind::Prior,
            probe_pull: DEFAULT_PROBE_PULL,
            fusion: FusionConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}` as a number"))
}

fn parse_steps(v: &str) -> std::result::Result<BTreeSet<usize>, String> {
    if v.is_empty() || v == "none" {
        return Ok(BTreeSet::new());
    }
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        let mut ref_index = None;
        let mut explicit = false;
        let mut amplitude = None;
        let mut kind = None;
        let mut stride_n = 2;
        let mut strided = false;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Config { line: line_no, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim().trim_matches('"'));
            if !seen.insert(key.to_string()) {
                return Err(err(format!("`{key}` is set twice")));
            }
            let path = || Some(PathBuf::from(value));
            let res: std::result::Result<(), String> = (|| {
                match key {
                    "io.frames" => cfg.io.frames = path(),
                    "io.masks" => cfg.io.masks = path(),
                    "io.anchors" => cfg.io.anchors = path(),
                    "io.plate" => cfg.io.plate = path(),
                    "io.out" => cfg.io.out = path(),
                    "io.report" => cfg.io.report = path(),
                    "io.debug_dir" => cfg.io.debug_dir = path(),
                    "seed" => cfg.seed = parse_num(value)?,
                    "threads" => {
                        let t: usize = parse_num(value)?;
                        cfg.threads = (t > 0).then_some(t);
                    }
                    "stages.op_completion" => cfg.op_completion = parse_bool(value)?,
                    "stages.ref_frame" | "ref.enabled" => cfg.ref_frame = parse_bool(value)?,
                    "ref.policy" => {
                        explicit = match value {
                            "min_hole_area" => false,
                            "explicit" => true,
                            _ => return Err(format!("unknown reference policy `{value}`")),
                        }
                    }
                    "ref.index" => ref_index = Some(parse_num(value)?),
                    "ref.position" => {
                        cfg.ref_position = match value {
                            "prepend" => InsertPosition::Prepend,
                            "adjacent" => InsertPosition::Adjacent,
                            _ => return Err(format!("unknown reference position `{value}`")),
                        }
                    }
                    "composite.feather" => cfg.composite_feather = parse_num(value)?,
                    "mask.dilation" => cfg.mask_dilation = parse_num(value)?,
                    "mask.pair_shadows" => cfg.pair_shadows = parse_bool(value)?,
                    "pairing.area_ratio_min" => cfg.pairing.area_ratio_min = parse_num(value)?,
                    "pairing.area_ratio_max" => cfg.pairing.area_ratio_max = parse_num(value)?,
                    "pairing.lower_band_fraction" => cfg.pairing.lower_band_fraction = parse_num(value)?,
                    "pairing.touch_margin" => cfg.pairing.touch_margin = parse_num(value)?,
                    "flow.block" => cfg.flow.block = parse_num(value)?,
                    "flow.radius" => cfg.flow.radius = parse_num(value)?,
                    "flow.max_chain" => cfg.max_chain = parse_num(value)?,
                    "sampler.train_steps" => cfg.train_steps = parse_num(value)?,
                    "sampler.inference_steps" => cfg.inference_steps = parse_num(value)?,
                    "sampler.known_reinjection" => cfg.known_reinjection = parse_bool(value)?,
                    "denoiser.kind" => {
                        kind = Some(match value {
                            "oracle" | "prior" | "seam_probe" => value.to_string(),
                            _ => return Err(format!("unknown denoiser `{value}`")),
                        })
                    }
                    "denoiser.amplitude" => amplitude = Some(parse_num(value)?),
                    "denoiser.pull" => cfg.probe_pull = parse_num(value)?,
                    "fusion.window_len" => cfg.fusion.window_len = parse_num(value)?,
                    "fusion.stride" => cfg.fusion.stride = parse_num(value)?,
                    "fusion.offset" => cfg.fusion.offset = parse_num(value)?,
                    "fusion.fusion_steps" => cfg.fusion.fusion_steps = parse_steps(value)?,
                    "fusion.noise_corr" => cfg.fusion.noise_corr = parse_num(value)?,
                    "fusion.mode" => {
                        strided = match value {
                            "contiguous" => false,
                            "strided" => true,
                            _ => return Err(format!("unknown fusion mode `{value}`")),
                        }
                    }
                    "fusion.stride_n" => stride_n = parse_num(value)?,
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        cfg.ref_policy = if explicit {
            RefPolicy::Explicit(ref_index.ok_or_else(|| Error::Config {
                line: 0,
                reason: "ref.policy = explicit needs ref.index".into(),
            })?)
        } else {
            RefPolicy::MinHoleArea
        };
        cfg.fusion.mode = if strided { FusionMode::Strided(stride_n) } else { FusionMode::Contiguous };
        cfg.denoiser = match kind.as_deref() {
            Some("oracle") => DenoiserKind::Oracle,
            Some("seam_probe") => DenoiserKind::SeamProbe {
                amplitude: amplitude.unwrap_or(0.1),
            },
            _ => DenoiserKind::Prior,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::Config {
            line: 0,
            reason: reason.to_string(),
        };
        if self.inference_steps == 0 || self.inference_steps > self.train_steps {
            return Err(bad("need 1 <= sampler.inference_steps <= sampler.train_steps"));
        }
        if self.flow.block == 0 {
            return Err(bad("flow.block must be positive"));
        }
        if !(0.0..=1.0).contains(&self.probe_pull) {
            return Err(bad("denoiser.pull must be in [0, 1]"));
        }
        self.fusion
            .validate(self.inference_steps)
            .map_err(|e| bad(&e.to_string()))?;
        if !(self.pairing.area_ratio_min > 0.0 && self.pairing.area_ratio_min < self.pairing.area_ratio_max) {
            return Err(bad("need 0 < pairing.area_ratio_min < pairing.area_ratio_max"));
        }
        Ok(())
    }

    /// Every key with its current value, in the documented order.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let io = &self.io;
        for (k, p) in [
            ("io.frames", &io.frames),
            ("io.masks", &io.masks),
            ("io.anchors", &io.anchors),
            ("io.plate", &io.plate),
            ("io.out", &io.out),
            ("io.report", &io.report),
            ("io.debug_dir", &io.debug_dir),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        put("seed", self.seed.to_string());
        put("threads", self.threads.unwrap_or(0).to_string());
        put("stages.op_completion", self.op_completion.to_string());
        put("ref.enabled", self.ref_frame.to_string());
        match self.ref_policy {
            RefPolicy::MinHoleArea => put("ref.policy", "min_hole_area".into()),
            RefPolicy::Explicit(i) => {
                put("ref.policy", "explicit".into());
                put("ref.index", i.to_string());
            }
        }
        put(
            "ref.position",
            match self.ref_position {
                InsertPosition::Prepend => "prepend",
                InsertPosition::Adjacent => "adjacent",
            }
            .into(),
        );
        put("composite.feather", self.composite_feather.to_string());
        put("mask.dilation", self.mask_dilation.to_string());
        put("mask.pair_shadows", self.pair_shadows.to_string());
        put("pairing.area_ratio_min", self.pairing.area_ratio_min.to_string());
        put("pairing.area_ratio_max", self.pairing.area_ratio_max.to_string());
        put("pairing.lower_band_fraction", self.pairing.lower_band_fraction.to_string());
        put("pairing.touch_margin", self.pairing.touch_margin.to_string());
        put("flow.block", self.flow.block.to_string());
        put("flow.radius", self.flow.radius.to_string());
        put("flow.max_chain", self.max_chain.to_string());
        put("sampler.train_steps", self.train_steps.to_string());
        put("sampler.inference_steps", self.inference_steps.to_string());
        put("sampler.known_reinjection", self.known_reinjection.to_string());
        match self.denoiser {
            DenoiserKind::Oracle => put("denoiser.kind", "oracle".into()),
            DenoiserKind::Prior => put("denoiser.kind", "prior".into()),
            DenoiserKind::SeamProbe { amplitude } => {
                put("denoiser.kind", "seam_probe".into());
                put("denoiser.amplitude", amplitude.to_string());
            }
        }
        put("denoiser.pull", self.probe_pull.to_string());
        put("fusion.window_len", self.fusion.window_len.to_string());
        put("fusion.stride", self.fusion.stride.to_string());
        put("fusion.offset", self.fusion.offset.to_string());
        put(
            "fusion.fusion_steps",
            self.fusion.fusion_steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
        );
        put("fusion.noise_corr", self.fusion.noise_corr.to_string());
        match self.fusion.mode {
            FusionMode::Contiguous => put("fusion.mode", "contiguous".into()),
            FusionMode::Strided(n) => {
                put("fusion.mode", "strided".into());
                put("fusion.stride_n", n.to_string());
            }
        }
        s
    }
}
