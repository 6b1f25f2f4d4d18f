use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use clap::{Args, Parser, Subcommand};
use log::info;

use vidfill::metrics::yt_slice;
use vidfill::pipeline::{
    DEFAULT_TOGGLES, Emit, PipelineConfig, anchor_masks, emit_report, evaluate_clip, load_input, propagate_anchor_masks,
    run_ablation, run_inpaint_dirs, toggle_id,
};
use vidfill::synth::{SceneSpec, anchor_frames, generate_scene};
use vidfill::video_io::{DEFAULT_FPS, load_clip_dir, load_mask_dir, save_frame, save_mask_dir};

#[derive(Parser)]
#[command(name = "vidfill", version, about = "Remove people and their shadows from video")]
struct Cli {
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for intermediate results of every stage.
    #[arg(long, global = true)]
    debug_dir: Option<PathBuf>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene with its clean plate and masks.
    Synth {
        /// Scene description as JSON.
        #[arg(long, conflicts_with = "suite")]
        spec: Option<PathBuf>,
        /// Seed of a benchmark-suite scene, instead of `--spec`.
        #[arg(long)]
        suite: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build removal masks for every frame from anchor-frame segmentations.
    Masks {
        #[arg(long)]
        frames: PathBuf,
        /// Person segmentation masks, one per frame.
        #[arg(long)]
        humans: PathBuf,
        /// Shadow segmentation masks, one per frame.
        #[arg(long)]
        shadows: Option<PathBuf>,
        /// Comma-separated anchor frame indices.
        #[arg(long, value_delimiter = ',', conflicts_with = "n_anchors")]
        anchors: Vec<usize>,
        /// Number of evenly spaced anchors, instead of `--anchors`.
        #[arg(long)]
        n_anchors: Option<usize>,
        /// Attach shadows that touch a person's feet.
        #[arg(long)]
        pair_shadows: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the removal pipeline.
    Inpaint {
        #[command(flatten)]
        io: IoArgs,
        /// Output frame directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report JSON path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score an output clip.
    Eval {
        /// Frames to score.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        plate: Option<PathBuf>,
        /// Hole masks; restrict the seam score to their union.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the stage ablation and write a CSV table.
    Ablate {
        #[command(flatten)]
        io: IoArgs,
        /// Configurations as `op,ref` pairs such as `1,0`; defaults to all four.
        #[arg(long = "toggle", value_parser = parse_toggle)]
        toggles: Vec<(bool, bool)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stack one pixel column over time into an image.
    Slice {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        column: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    frames: Option<PathBuf>,
    #[arg(long, conflicts_with = "anchors")]
    masks: Option<PathBuf>,
    /// Masks for a subset of frames, named by frame index.
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long)]
    plate: Option<PathBuf>,
}

fn parse_toggle(s: &str) -> std::result::Result<(bool, bool), String> {
    let flag = |v: &str| match v.trim() {
        "1" | "true" | "on" => Ok(true),
        "0" | "false" | "off" => Ok(false),
        other => Err(format!("expected 0 or 1, got `{other}`")),
    };
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `op,ref`, got `{s}`"))?;
    Ok((flag(a)?, flag(b)?))
}

impl Cli {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                PipelineConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.debug_dir {
            cfg.io.debug_dir = Some(d.clone());
        }
        if let Some(t) = self.threads {
            cfg.threads = (t > 0).then_some(t);
        }
        Ok(cfg)
    }
}

fn apply_io(cfg: &mut PipelineConfig, io: &IoArgs) {
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.io.frames, &io.frames);
    if io.masks.is_some() {
        cfg.io.anchors = None;
    }
    if io.anchors.is_some() {
        cfg.io.masks = None;
    }
    set(&mut cfg.io.masks, &io.masks);
    set(&mut cfg.io.anchors, &io.anchors);
    set(&mut cfg.io.plate, &io.plate);
}

fn synth(spec: Option<&Path>, suite: Option<u64>, out: &Path) -> Result<()> {
    let spec = match (spec, suite) {
        (Some(p), _) => SceneSpec::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        (None, Some(seed)) => SceneSpec::suite(seed),
        (None, None) => bail!("pass --spec or --suite"),
    };
    let scene = generate_scene(&spec)?;
    scene.write(out)?;
    std::fs::write(out.join("scene.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    info!("wrote {} frames to {}", scene.clip.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = cli.config()?;
    match &cli.command {
        Command::Synth { spec, suite, out } => synth(spec.as_deref(), *suite, out)?,
        Command::Masks {
            frames,
            humans,
            shadows,
            anchors,
            n_anchors,
            pair_shadows,
            out,
        } => {
            let clip = load_clip_dir(frames, DEFAULT_FPS)?;
            let humans = load_mask_dir(humans)?;
            let shadows = match shadows {
                Some(s) => load_mask_dir(s)?,
                None => vidfill::video_io::MaskSeq::empty(humans.len(), humans.height(), humans.width()),
            };
            if humans.len() != clip.len() || shadows.len() != clip.len() {
                bail!("segmentations cover {} / {} frames, clip has {}", humans.len(), shadows.len(), clip.len());
            }
            let indices = match n_anchors {
                Some(n) => anchor_frames(clip.len(), *n)?,
                None if anchors.is_empty() => anchor_frames(clip.len(), 1)?,
                None => anchors.clone(),
            };
            cfg.pair_shadows = *pair_shadows;
            let anchor_set = anchor_masks(&humans, &shadows, &indices, &cfg)?;
            let masks = propagate_anchor_masks(&clip, &anchor_set, &cfg)?;
            save_mask_dir(&masks, out)?;
            info!("propagated {} anchors to {} frames", indices.len(), masks.len());
        }
        Command::Inpaint { io, out, report } => {
            apply_io(&mut cfg, io);
            if out.is_some() {
                cfg.io.out.clone_from(out);
            }
            if report.is_some() {
                cfg.io.report.clone_from(report);
            }
            let result = run_inpaint_dirs(&cfg)?;
            if cfg.io.report.is_none() {
                println!("{}", serde_json::to_string_pretty(&result.report)?);
            }
        }
        Command::Eval {
            output,
            plate,
            masks,
            report,
        } => {
            let clip = load_clip_dir(output, DEFAULT_FPS)?;
            let plate = plate.as_ref().map(|p| load_clip_dir(p, DEFAULT_FPS)).transpose()?;
            let holes = masks.as_ref().map(load_mask_dir).transpose()?;
            let r = evaluate_clip(&cfg, &clip, plate.as_ref(), holes.as_ref())?;
            emit_report(&Emit::Single(&r), report)?;
        }
        Command::Ablate { io, toggles, out } => {
            apply_io(&mut cfg, io);
            let toggles = if toggles.is_empty() { DEFAULT_TOGGLES.to_vec() } else { toggles.clone() };
            let input = load_input(&cfg)?;
            let rows = run_ablation(&cfg, &input, &toggles)?;
            for row in &rows {
                info!("{}: psnr {:?}", toggle_id(row.op_completion, row.ref_frame), row.report.psnr);
            }
            emit_report(&Emit::Table(&rows), out)?;
        }
        Command::Slice { frames, column, out } => {
            let clip = load_clip_dir(frames, DEFAULT_FPS)?;
            save_frame(&yt_slice(&clip, *column)?, out)?;
        }
    }
    Ok(())
}
