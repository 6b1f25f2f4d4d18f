//! Synthetic scenes with known clean plates.
//!
//! Everything moves by whole pixels per frame, so the flow between frames
//! is an exact integer translation and the ground truth for every removal
//! is available. Background textures are evaluated in world coordinates;
//! the camera pan shifts the viewport by `camera_pan` pixels per frame.
//!
//! Randomness comes from two portable sources: SplitMix64 hashing of
//! lattice coordinates for textures, and ChaCha8 (seeded with
//! `seed_from_u64`) for sprite attributes left unspecified.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{save_clip_dir, save_mask_dir, Frame, Mask, MaskSeq, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Checker { cell: usize },
    /// Multi-octave value noise plus fine per-pixel detail.
    #[default]
    Smooth,
    /// A global linear ramp, exactly representable by the latent codec.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// Shadow cast below a sprite. The footprint has the sprite's width and
/// `scale` times its height, with its top-left corner at the sprite's
/// bottom-left corner plus `offset`. Shadowed pixels are multiplied by
/// `1 - darkening`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowSpec {
    #[serde(default)]
    pub offset: (i64, i64),
    pub scale: f64,
    pub darkening: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub shape: Shape,
    /// `(width, height)`.
    pub size: (usize, usize),
    /// Top-left corner at frame 0.
    pub position: (i64, i64),
    #[serde(default)]
    pub velocity: (i64, i64),
    /// Drawn from the scene RNG when absent.
    #[serde(default)]
    pub color: Option<[f64; 3]>,
    /// Horizontal stripe period; every other band is darkened.
    #[serde(default)]
    pub stripes: Option<usize>,
    #[serde(default)]
    pub shadow: Option<ShadowSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub camera_pan: (i64, i64),
    #[serde(default)]
    pub sprites: Vec<SpriteSpec>,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_fps() -> f64 {
    24.0
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// A member of the seeded benchmark suite: 64×64, 24 frames, one
    /// moving sprite with a shadow over a smooth background, and a static
    /// or slowly panning camera.
    pub fn suite(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed5_u64);
        let pan = [(0, 0), (1, 0), (-1, 0), (0, 1)][rng.random_range(0..4)];
        let w = rng.random_range(8..=12);
        let h = rng.random_range(12..=18);
        let vx = [-2i64, -1, 1, 2][rng.random_range(0..4)];
        let x0 = if vx > 0 { rng.random_range(2..16) } else { rng.random_range(40..52) };
        SceneSpec {
            seed,
            frames: 24,
            height: 64,
            width: 64,
            background: Background::Smooth,
            camera_pan: pan,
            sprites: vec![SpriteSpec {
                shape: if rng.random_bool(0.5) { Shape::Rect } else { Shape::Ellipse },
                size: (w, h),
                position: (x0, rng.random_range(16..30)),
                velocity: (vx, 0),
                color: None,
                stripes: Some(3),
                shadow: Some(ShadowSpec {
                    offset: (2, 0),
                    scale: 0.3,
                    darkening: 0.45,
                }),
            }],
            fps: 24.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::invalid("scene needs at least one frame and a nonzero size"));
        }
        if let Background::Checker { cell: 0 } = self.background {
            return Err(Error::invalid("checker cell must be positive"));
        }
        for (i, s) in self.sprites.iter().enumerate() {
            let (w, h) = s.size;
            if w == 0 || h == 0 {
                return Err(Error::invalid(format!("sprite {i} has zero size")));
            }
            if w > self.width || h > self.height {
                return Err(Error::invalid(format!("sprite {i} is larger than the frame")));
            }
            if let Some(sh) = &s.shadow {
                if !(sh.darkening > 0.0 && sh.darkening < 1.0) {
                    return Err(Error::invalid(format!("sprite {i} shadow darkening must be in (0,1)")));
                }
                if !(sh.scale > 0.0 && sh.scale.is_finite()) {
                    return Err(Error::invalid(format!("sprite {i} shadow scale must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Rendered scene: the input clip, its clean plate, and the ground-truth
/// sprite and shadow masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub clip: VideoClip,
    pub plate: VideoClip,
    pub sprite_masks: MaskSeq,
    pub shadow_masks: MaskSeq,
}

impl Scene {
    /// Everything that should be removed: sprites and their shadows.
    pub fn removal_masks(&self) -> MaskSeq {
        self.sprite_masks.union(&self.shadow_masks).expect("masks share shape")
    }

    /// Writes `frames/`, `masks/` (sprites ∪ shadows), `plate/`,
    /// `sprite_masks/` and `shadow_masks/` under `root`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        save_clip_dir(&self.clip, root.join("frames"))?;
        save_mask_dir(&self.removal_masks(), root.join("masks"))?;
        save_clip_dir(&self.plate, root.join("plate"))?;
        save_mask_dir(&self.sprite_masks, root.join("sprite_masks"))?;
        save_mask_dir(&self.shadow_masks, root.join("shadow_masks"))?;
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_unit(seed: u64, x: i64, y: i64, salt: u64) -> f64 {
    let h = splitmix64(
        seed ^ splitmix64((x as u64).wrapping_mul(0x9E37_79B1) ^ splitmix64((y as u64) ^ salt.rotate_left(17))),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

struct BackgroundField {
    kind: Background,
    seed: u64,
    // Gradient parameters: value = base + sx * X + sy * Y.
    base: [f64; 3],
    slope: [(f64, f64); 3],
}

impl BackgroundField {
    fn new(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Self {
        let span = |pan: i64, len: usize| {
            let sweep = pan * (spec.frames as i64 - 1);
            let lo = sweep.min(0);
            let hi = len as i64 - 1 + sweep.max(0);
            (lo as f64, (hi - lo).max(1) as f64)
        };
        let (x_lo, x_span) = span(spec.camera_pan.0, spec.width);
        let (y_lo, y_span) = span(spec.camera_pan.1, spec.height);
        let mut base = [0.0; 3];
        let mut slope = [(0.0, 0.0); 3];
        for c in 0..3 {
            // Split a total rise of at most 0.8 between the two axes.
            let fx: f64 = rng.random_range(0.2..0.8);
            let rise: f64 = rng.random_range(0.4..0.8);
            let sign_x = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sign_y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let sx = sign_x * rise * fx / x_span;
            let sy = sign_y * rise * (1.0 - fx) / y_span;
            // Anchor the minimum of the ramp at 0.1.
            let min_x = if sx >= 0.0 { x_lo } else { x_lo + x_span };
            let min_y = if sy >= 0.0 { y_lo } else { y_lo + y_span };
            base[c] = 0.1 - sx * min_x - sy * min_y;
            slope[c] = (sx, sy);
        }
        Self {
            kind: spec.background,
            seed: spec.seed,
            base,
            slope,
        }
    }

    fn value_noise(&self, x: i64, y: i64, cell: i64, salt: u64) -> f64 {
        let (cx, cy) = (x.div_euclid(cell), y.div_euclid(cell));
        let fx = x.rem_euclid(cell) as f64 / cell as f64;
        let fy = y.rem_euclid(cell) as f64 / cell as f64;
        let v00 = hash_unit(self.seed, cx, cy, salt);
        let v10 = hash_unit(self.seed, cx + 1, cy, salt);
        let v01 = hash_unit(self.seed, cx, cy + 1, salt);
        let v11 = hash_unit(self.seed, cx + 1, cy + 1, salt);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        top + (bottom - top) * fy
    }

    fn sample(&self, x: i64, y: i64, c: usize) -> f64 {
        match self.kind {
            Background::Checker { cell } => {
                let cell = cell as i64;
                let parity = (x.div_euclid(cell) + y.div_euclid(cell)).rem_euclid(2);
                let (dark, light) = ([0.15, 0.2, 0.25][c], [0.8, 0.75, 0.7][c]);
                if parity == 0 {
                    dark
                } else {
                    light
                }
            }
            Background::Gradient => {
                let (sx, sy) = self.slope[c];
                self.base[c] + sx * x as f64 + sy * y as f64
            }
            Background::Smooth => {
                let salt = c as u64 * 0x1000;
                let v = 0.45 * self.value_noise(x, y, 16, salt + 1)
                    + 0.3 * self.value_noise(x, y, 8, salt + 2)
                    + 0.15 * self.value_noise(x, y, 4, salt + 3)
                    + 0.1 * hash_unit(self.seed, x, y, salt + 4);
                0.1 + 0.8 * v
            }
        }
    }
}

fn in_shape(shape: Shape, (w, h): (usize, usize), dx: i64, dy: i64) -> bool {
    if dx < 0 || dy < 0 || dx >= w as i64 || dy >= h as i64 {
        return false;
    }
    match shape {
        Shape::Rect => true,
        Shape::Ellipse => {
            let (rx, ry) = (w as f64 / 2.0, h as f64 / 2.0);
            let px = (dx as f64 + 0.5 - rx) / rx;
            let py = (dy as f64 + 0.5 - ry) / ry;
            px * px + py * py <= 1.0
        }
    }
}

struct Placed<'a> {
    spec: &'a SpriteSpec,
    color: [f64; 3],
}

impl Placed<'_> {
    fn origin(&self, t: usize) -> (i64, i64) {
        let (x, y) = self.spec.position;
        let (vx, vy) = self.spec.velocity;
        (x + vx * t as i64, y + vy * t as i64)
    }

    fn covers(&self, t: usize, x: i64, y: i64) -> bool {
        let (ox, oy) = self.origin(t);
        in_shape(self.spec.shape, self.spec.size, x - ox, y - oy)
    }

    fn shadow_covers(&self, t: usize, x: i64, y: i64) -> Option<f64> {
        let sh = self.spec.shadow.as_ref()?;
        let (ox, oy) = self.origin(t);
        let (w, h) = self.spec.size;
        let sh_h = ((h as f64 * sh.scale).round() as usize).max(1);
        let (sx, sy) = (ox + sh.offset.0, oy + h as i64 + sh.offset.1);
        in_shape(self.spec.shape, (w, sh_h), x - sx, y - sy).then_some(sh.darkening)
    }

    fn pixel(&self, t: usize, y: i64, c: usize) -> f64 {
        let base = self.color[c];
        match self.spec.stripes {
            Some(p) if p > 0 => {
                let (_, oy) = self.origin(t);
                if ((y - oy) / p as i64) % 2 == 1 {
                    base * 0.6
                } else {
                    base
                }
            }
            _ => base,
        }
    }
}

/// Renders a scene deterministically from its spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let field = BackgroundField::new(spec, &mut rng);
    let sprites: Vec<Placed> = spec
        .sprites
        .iter()
        .map(|s| {
            let drawn = [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ];
            Placed {
                spec: s,
                color: s.color.unwrap_or(drawn),
            }
        })
        .collect();

    let (h, w, c) = (spec.height, spec.width, 3);
    let mut clip = Vec::with_capacity(spec.frames);
    let mut plate = Vec::with_capacity(spec.frames);
    let mut sprite_masks = Vec::with_capacity(spec.frames);
    let mut shadow_masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let (px, py) = (spec.camera_pan.0 * t as i64, spec.camera_pan.1 * t as i64);
        let mut plate_data = Vec::with_capacity(h * w * c);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                for ch in 0..c {
                    plate_data.push(field.sample(x + px, y + py, ch).clamp(0.0, 1.0));
                }
            }
        }
        let mut clip_data = plate_data.clone();
        let mut sprite_mask = Mask::empty(h, w);
        let mut shadow_mask = Mask::empty(h, w);
        for y in 0..h {
            for x in 0..w {
                let (xi, yi) = (x as i64, y as i64);
                let idx = (y * w + x) * c;
                for s in &sprites {
                    if let Some(darkening) = s.shadow_covers(t, xi, yi) {
                        shadow_mask.set(y, x, true);
                        for v in &mut clip_data[idx..idx + c] {
                            *v *= 1.0 - darkening;
                        }
                    }
                }
                // Painter's order: later sprites overwrite earlier ones.
                for s in &sprites {
                    if s.covers(t, xi, yi) {
                        sprite_mask.set(y, x, true);
                        for ch in 0..c {
                            clip_data[idx + ch] = s.pixel(t, yi, ch);
                        }
                    }
                }
                if sprite_mask.get(y, x) {
                    shadow_mask.set(y, x, false);
                }
            }
        }
        plate.push(Frame::from_clamped(h, w, c, plate_data));
        clip.push(Frame::from_clamped(h, w, c, clip_data));
        sprite_masks.push(sprite_mask);
        shadow_masks.push(shadow_mask);
    }
    Ok(Scene {
        clip: VideoClip::new(clip, spec.fps)?,
        plate: VideoClip::new(plate, spec.fps)?,
        sprite_masks: MaskSeq::new(sprite_masks)?,
        shadow_masks: MaskSeq::new(shadow_masks)?,
    })
}

/// Evenly spaced anchor indices including frame 0 (and the last frame
/// when `n_anchor > 1`): `floor(i * (F - 1) / (n - 1))`.
pub fn anchor_frames(frame_count: usize, n_anchor: usize) -> Result<Vec<usize>> {
    if n_anchor == 0 || n_anchor > frame_count {
        return Err(Error::invalid(format!(
            "need 1 <= n_anchor <= {frame_count}, got {n_anchor}"
        )));
    }
    if n_anchor == 1 {
        return Ok(vec![0]);
    }
    Ok((0..n_anchor).map(|i| i * (frame_count - 1) / (n_anchor - 1)).collect())
}
