//! In-memory frame, clip and hole-mask types plus the PNG directory
//! interchange format.
//!
//! Masks store holes: `1` marks a pixel to inpaint, `0` a known pixel. The
//! keep-map used by the masking algebra (`X ⊙ M`) is always derived as
//! `1 - hole` at the point of use.
//!
//! On disk a sequence is a directory of `frame_%05d.png` files numbered
//! contiguously from `00000`. Clip frames are 8-bit RGB (or grayscale),
//! masks are 8-bit grayscale with `255` = hole.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb};
use ndarray::Array3;

use crate::error::{Error, Result};

/// A single image with values in `[0, 1]`, stored row-major, channels
/// interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::dims(format!(
                "frame data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid("frame values must be finite and within [0, 1]"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a frame from arbitrary reals, clamping into `[0, 1]` and
    /// mapping non-finite values to 0.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width * channels);
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::from_clamped(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub(crate) fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Pads to the next multiple of `factor` in both dimensions by edge
    /// replication.
    pub fn pad_to_multiple(&self, factor: usize) -> Frame {
        let (h, w) = (padded_len(self.height, factor), padded_len(self.width, factor));
        if h == self.height && w == self.width {
            return self.clone();
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            let sy = y.min(self.height - 1);
            for x in 0..w {
                let sx = x.min(self.width - 1);
                for ch in 0..c {
                    data.push(self.get(sy, sx, ch));
                }
            }
        }
        Frame {
            height: h,
            width: w,
            channels: c,
            data,
        }
    }

    /// Top-left crop.
    pub fn crop(&self, height: usize, width: usize) -> Frame {
        assert!(height <= self.height && width <= self.width);
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for y in 0..height {
            let row = (y * self.width) * c;
            data.extend_from_slice(&self.data[row..row + width * c]);
        }
        Frame {
            height,
            width,
            channels: c,
            data,
        }
    }
}

/// An ordered, uniformly sized frame sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Vec<Frame>,
    fps: f64,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyClip)?;
        if let Some((i, _)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::dims(format!("frame {i} differs in shape from frame 0")));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels
    }

    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        Self::new(frames, self.fps)
    }

    pub fn pad_to_multiple(&self, factor: usize) -> VideoClip {
        Self {
            frames: self.frames.iter().map(|f| f.pad_to_multiple(factor)).collect(),
            fps: self.fps,
        }
    }

    pub fn crop(&self, height: usize, width: usize) -> VideoClip {
        Self {
            frames: self.frames.iter().map(|f| f.crop(height, width)).collect(),
            fps: self.fps,
        }
    }
}

/// A binary map of one frame. `true` marks a hole.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    /// Builds a mask from any values; nonzero entries become holes.
    pub fn from_values(height: usize, width: usize, values: &[u8]) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::dims(format!(
                "mask data has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data: values.iter().map(|&v| u8::from(v != 0)).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    /// Bounds-checked lookup; outside the map reads as known.
    #[inline]
    pub fn get_signed(&self, y: i64, x: i64) -> bool {
        y >= 0
            && x >= 0
            && (y as usize) < self.height
            && (x as usize) < self.width
            && self.get(y as usize, x as usize)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, hole: bool) {
        self.data[y * self.width + x] = u8::from(hole);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_shape(&self, other: &Mask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert!(self.same_shape(other));
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        assert!(self.same_shape(other));
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect(),
        }
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| *a <= *b)
    }

    /// Pads to a multiple of `factor`; the padding is marked as hole so it
    /// never contributes known content.
    pub fn pad_to_multiple(&self, factor: usize) -> Mask {
        let (h, w) = (padded_len(self.height, factor), padded_len(self.width, factor));
        Mask::from_fn(h, w, |y, x| y >= self.height || x >= self.width || self.get(y, x))
    }

    pub fn crop(&self, height: usize, width: usize) -> Mask {
        Mask::from_fn(height, width, |y, x| self.get(y, x))
    }
}

/// Per-frame hole masks aligned with a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSeq {
    masks: Vec<Mask>,
}

impl MaskSeq {
    pub fn new(masks: Vec<Mask>) -> Result<Self> {
        let first = masks.first().ok_or(Error::EmptyClip)?;
        if let Some((i, _)) = masks.iter().enumerate().find(|(_, m)| !m.same_shape(first)) {
            return Err(Error::dims(format!("mask {i} differs in shape from mask 0")));
        }
        Ok(Self { masks })
    }

    pub fn empty(frames: usize, height: usize, width: usize) -> Self {
        Self {
            masks: vec![Mask::empty(height, width); frames],
        }
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn into_masks(self) -> Vec<Mask> {
        self.masks
    }

    pub fn mask(&self, i: usize) -> &Mask {
        &self.masks[i]
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn height(&self) -> usize {
        self.masks[0].height
    }

    pub fn width(&self) -> usize {
        self.masks[0].width
    }

    pub fn hole_count(&self) -> usize {
        self.masks.iter().map(Mask::count).sum()
    }

    pub fn union(&self, other: &MaskSeq) -> Result<MaskSeq> {
        if self.len() != other.len() || !self.masks[0].same_shape(&other.masks[0]) {
            return Err(Error::dims("mask sequences differ in shape"));
        }
        Ok(MaskSeq {
            masks: self.masks.iter().zip(&other.masks).map(|(a, b)| a.union(b)).collect(),
        })
    }

    /// Every hole of `self` is also a hole of `other`.
    pub fn is_subset(&self, other: &MaskSeq) -> bool {
        self.len() == other.len() && self.masks.iter().zip(&other.masks).all(|(a, b)| a.is_subset_of(b))
    }

    pub fn pad_to_multiple(&self, factor: usize) -> MaskSeq {
        MaskSeq {
            masks: self.masks.iter().map(|m| m.pad_to_multiple(factor)).collect(),
        }
    }

    pub fn crop(&self, height: usize, width: usize) -> MaskSeq {
        MaskSeq {
            masks: self.masks.iter().map(|m| m.crop(height, width)).collect(),
        }
    }

    pub fn matches(&self, clip: &VideoClip) -> bool {
        self.len() == clip.len() && self.height() == clip.height() && self.width() == clip.width()
    }
}

/// Latent-scale soft keep-map, shape `[frames, h, w]`, values in `[0, 1]`.
pub type KnownMap = Array3<f64>;

pub(crate) fn padded_len(n: usize, factor: usize) -> usize {
    n.div_ceil(factor) * factor
}

/// Zeroes every hole pixel: `X ⊙ (1 - hole)`.
pub fn apply_mask(clip: &VideoClip, holes: &MaskSeq) -> Result<VideoClip> {
    if !holes.matches(clip) {
        return Err(Error::dims("mask sequence does not match clip"));
    }
    let frames = clip
        .frames()
        .iter()
        .zip(holes.masks())
        .map(|(frame, mask)| {
            let mut out = frame.clone();
            let c = frame.channels();
            for (i, &hole) in mask.values().iter().enumerate() {
                if hole != 0 {
                    out.data_mut()[i * c..(i + 1) * c].fill(0.0);
                }
            }
            out
        })
        .collect();
    clip.with_frames(frames)
}

/// Area-averages the keep-map `1 - hole` over `factor × factor` blocks.
/// Dimensions that are not multiples of `factor` are padded with holes.
pub fn downscale_mask(holes: &MaskSeq, factor: usize) -> Result<KnownMap> {
    if factor == 0 {
        return Err(Error::invalid("downscale factor must be positive"));
    }
    let padded = holes.pad_to_multiple(factor);
    let (h, w) = (padded.height() / factor, padded.width() / factor);
    let area = (factor * factor) as f64;
    let mut out = Array3::<f64>::zeros((holes.len(), h, w));
    for (f, mask) in padded.masks().iter().enumerate() {
        for by in 0..h {
            for bx in 0..w {
                let mut known = 0usize;
                for y in by * factor..(by + 1) * factor {
                    for x in bx * factor..(bx + 1) * factor {
                        known += usize::from(!mask.get(y, x));
                    }
                }
                out[[f, by, bx]] = known as f64 / area;
            }
        }
    }
    Ok(out)
}

/// What a frame directory holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Clip,
    Mask,
}

/// Result of [`load_frame_dir`].
#[derive(Debug, Clone)]
pub enum Loaded {
    Clip(VideoClip),
    Masks(MaskSeq),
}

pub const DEFAULT_FPS: f64 = 24.0;

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn parse_frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".png")?;
    if digits.len() < 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn list_indexed(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if let Some(index) = entry.file_name().to_str().and_then(parse_frame_index) {
            found.push((index, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(Error::EmptyClip);
    }
    found.sort();
    Ok(found)
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let found = list_indexed(dir)?;
    for (expected, (index, _)) in found.iter().enumerate() {
        if *index != expected {
            return Err(Error::MissingFrame(expected));
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_frame_dir(dir: impl AsRef<Path>, kind: FrameKind) -> Result<Loaded> {
    Ok(match kind {
        FrameKind::Clip => Loaded::Clip(load_clip_dir(dir, DEFAULT_FPS)?),
        FrameKind::Mask => Loaded::Masks(load_mask_dir(dir)?),
    })
}

/// Loads `frame_%05d.png` files as a clip, mapping 8-bit values by `/255`.
pub fn load_clip_dir(dir: impl AsRef<Path>, fps: f64) -> Result<VideoClip> {
    let mut frames = Vec::new();
    for path in list_frames(dir.as_ref())? {
        let img = open_image(&path)?;
        let gray = matches!(img.color().channel_count(), 1 | 2);
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = if gray {
            (1, img.to_luma8().into_raw())
        } else {
            (3, img.to_rgb8().into_raw())
        };
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        let frame = Frame::new(h, w, channels, data)?;
        if let Some(first) = frames.first() {
            if !frame.same_shape(first) {
                return Err(Error::dims(format!("{} differs in shape from frame 0", path.display())));
            }
        }
        frames.push(frame);
    }
    VideoClip::new(frames, fps)
}

fn load_mask_file(path: &Path) -> Result<Mask> {
    let img = open_image(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<u8> = img.into_raw().into_iter().map(|b| u8::from(b >= 128)).collect();
    Mask::from_values(h, w, &values)
}

/// Loads a sparse set of masks, e.g. anchors; gaps in the numbering are
/// allowed and the file index becomes the frame index.
pub fn load_indexed_masks(dir: impl AsRef<Path>) -> Result<Vec<(usize, Mask)>> {
    let mut out: Vec<(usize, Mask)> = Vec::new();
    for (index, path) in list_indexed(dir.as_ref())? {
        let mask = load_mask_file(&path)?;
        if let Some((_, first)) = out.first() {
            if !mask.same_shape(first) {
                return Err(Error::dims(format!("{} differs in shape from the first mask", path.display())));
            }
        }
        out.push((index, mask));
    }
    Ok(out)
}

/// Loads grayscale masks, binarized at 128 (`>= 128` is a hole).
pub fn load_mask_dir(dir: impl AsRef<Path>) -> Result<MaskSeq> {
    let mut masks: Vec<Mask> = Vec::new();
    for path in list_frames(dir.as_ref())? {
        let mask = load_mask_file(&path)?;
        if let Some(first) = masks.first() {
            if !mask.same_shape(first) {
                return Err(Error::dims(format!("{} differs in shape from mask 0", path.display())));
            }
        }
        masks.push(mask);
    }
    MaskSeq::new(masks)
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    if frame.channels() == 1 {
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer sized from frame")
            .save(path)?;
    } else {
        ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer sized from frame")
            .save(path)?;
    }
    Ok(())
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes = mask.values().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer sized from mask")
        .save(path)?;
    Ok(())
}

pub fn save_clip_dir(clip: &VideoClip, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if clip.is_empty() {
        return Err(Error::EmptyClip);
    }
    fs::create_dir_all(dir)?;
    for (i, frame) in clip.frames().iter().enumerate() {
        save_frame(frame, dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

pub fn save_mask_dir(masks: &MaskSeq, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if masks.is_empty() {
        return Err(Error::EmptyClip);
    }
    fs::create_dir_all(dir)?;
    for (i, mask) in masks.masks().iter().enumerate() {
        save_mask(mask, dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

/// Writes either a clip or a mask sequence.
pub fn save_frame_dir(item: &Loaded, dir: impl AsRef<Path>) -> Result<()> {
    match item {
        Loaded::Clip(clip) => save_clip_dir(clip, dir),
        Loaded::Masks(masks) => save_mask_dir(masks, dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_clip(frames: usize, h: usize, w: usize) -> VideoClip {
        let frames = (0..frames)
            .map(|f| {
                let data = (0..h * w * 3)
                    .map(|i| ((i * 7 + f * 13) % 256) as f64 / 255.0)
                    .collect();
                Frame::new(h, w, 3, data).unwrap()
            })
            .collect();
        VideoClip::new(frames, 24.0).unwrap()
    }

    #[test]
    fn loads_contiguous_rgb_directory() {
        let dir = tempfile::tempdir().unwrap();
        save_clip_dir(&ramp_clip(3, 64, 64), dir.path()).unwrap();
        let clip = load_clip_dir(dir.path(), 24.0).unwrap();
        assert_eq!((clip.len(), clip.height(), clip.width(), clip.channels()), (3, 64, 64, 3));
    }

    #[test]
    fn full_white_mask_is_all_hole() {
        let dir = tempfile::tempdir().unwrap();
        GrayImage::from_pixel(8, 4, Luma([255]))
            .save(dir.path().join(frame_file_name(0)))
            .unwrap();
        let masks = load_mask_dir(dir.path()).unwrap();
        assert_eq!(masks.mask(0).count(), 32);
    }

    #[test]
    fn mask_threshold_is_128() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap();
        img.save(dir.path().join(frame_file_name(0))).unwrap();
        let masks = load_mask_dir(dir.path()).unwrap();
        assert_eq!(masks.mask(0).values(), &[0, 0, 1, 1]);
    }

    #[test]
    fn gap_in_indices_reports_missing_frame() {
        let dir = tempfile::tempdir().unwrap();
        let clip = ramp_clip(1, 4, 4);
        save_frame(clip.frame(0), dir.path().join(frame_file_name(0))).unwrap();
        save_frame(clip.frame(0), dir.path().join(frame_file_name(2))).unwrap();
        assert!(matches!(load_clip_dir(dir.path(), 24.0), Err(Error::MissingFrame(1))));
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_frame(&Frame::filled(4, 4, 3, 0.2), dir.path().join(frame_file_name(0))).unwrap();
        save_frame(&Frame::filled(4, 5, 3, 0.2), dir.path().join(frame_file_name(1))).unwrap();
        assert!(matches!(load_clip_dir(dir.path(), 24.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn garbage_png_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(frame_file_name(0)), b"not a png").unwrap();
        assert!(matches!(load_clip_dir(dir.path(), 24.0), Err(Error::Decode { .. })));
    }

    #[test]
    fn unrelated_files_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        save_clip_dir(&ramp_clip(2, 4, 4), dir.path()).unwrap();
        fs::write(dir.path().join("notes.txt"), b"hello").unwrap();
        assert_eq!(load_clip_dir(dir.path(), 24.0).unwrap().len(), 2);
    }

    #[test]
    fn clip_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let clip = ramp_clip(2, 9, 7);
        save_clip_dir(&clip, dir.path()).unwrap();
        let back = load_clip_dir(dir.path(), 24.0).unwrap();
        for (a, b) in clip.frames().iter().zip(back.frames()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn mask_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let masks = MaskSeq::new(vec![
            Mask::from_fn(5, 6, |y, x| (x + y) % 3 == 0),
            Mask::from_fn(5, 6, |y, _| y == 2),
        ])
        .unwrap();
        save_mask_dir(&masks, dir.path()).unwrap();
        assert_eq!(load_mask_dir(dir.path()).unwrap(), masks);
    }

    #[test]
    fn empty_clip_is_rejected() {
        assert!(matches!(VideoClip::new(vec![], 24.0), Err(Error::EmptyClip)));
        assert!(matches!(MaskSeq::new(vec![]), Err(Error::EmptyClip)));
    }

    #[test]
    fn apply_mask_cases() {
        let clip = ramp_clip(2, 6, 6);
        let none = MaskSeq::empty(2, 6, 6);
        assert_eq!(apply_mask(&clip, &none).unwrap(), clip);

        let all = MaskSeq::new(vec![Mask::full(6, 6); 2]).unwrap();
        assert!(apply_mask(&clip, &all)
            .unwrap()
            .frames()
            .iter()
            .all(|f| f.data().iter().all(|&v| v == 0.0)));

        let mut one = MaskSeq::empty(2, 6, 6).into_masks();
        one[1].set(4, 3, true);
        let one = MaskSeq::new(one).unwrap();
        let out = apply_mask(&clip, &one).unwrap();
        assert_eq!(out.frame(0), clip.frame(0));
        for y in 0..6 {
            for x in 0..6 {
                for c in 0..3 {
                    let expect = if (y, x) == (4, 3) { 0.0 } else { clip.frame(1).get(y, x, c) };
                    assert_eq!(out.frame(1).get(y, x, c), expect);
                }
            }
        }
        let twice = apply_mask(&out, &one).unwrap();
        assert_eq!(twice, out);
    }

    #[test]
    fn apply_mask_rejects_mismatch() {
        let clip = ramp_clip(2, 6, 6);
        assert!(matches!(
            apply_mask(&clip, &MaskSeq::empty(2, 6, 5)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn downscale_block_averages() {
        let hole = MaskSeq::new(vec![Mask::full(8, 8)]).unwrap();
        assert_eq!(downscale_mask(&hole, 8).unwrap()[[0, 0, 0]], 0.0);
        let known = MaskSeq::empty(1, 8, 8);
        assert_eq!(downscale_mask(&known, 8).unwrap()[[0, 0, 0]], 1.0);
        let sixteen = MaskSeq::new(vec![Mask::from_fn(8, 8, |y, x| y < 2 && x < 8)]).unwrap();
        assert_eq!(downscale_mask(&sixteen, 8).unwrap()[[0, 0, 0]], 0.75);
        assert!(matches!(downscale_mask(&known, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn downscale_pads_with_hole() {
        let known = MaskSeq::empty(1, 4, 12);
        let map = downscale_mask(&known, 8).unwrap();
        assert_eq!(map.shape(), &[1, 1, 2]);
        assert_eq!(map[[0, 0, 0]], 0.5);
        assert_eq!(map[[0, 0, 1]], 0.25);
    }

    #[test]
    fn downscale_mean_matches_hole_fraction() {
        let mask = Mask::from_fn(16, 24, |y, x| (x * 5 + y * 3) % 7 < 3);
        let holes = MaskSeq::new(vec![mask.clone()]).unwrap();
        let map = downscale_mask(&holes, 8).unwrap();
        let hole_fraction = mask.count() as f64 / (16.0 * 24.0);
        assert!((map.mean().unwrap() - (1.0 - hole_fraction)).abs() < 1e-12);
    }

    #[test]
    fn pad_and_crop_round_trip() {
        let frame = Frame::new(3, 5, 1, (0..15).map(|v| v as f64 / 15.0).collect()).unwrap();
        let padded = frame.pad_to_multiple(8);
        assert_eq!((padded.height(), padded.width()), (8, 8));
        assert_eq!(padded.get(7, 7, 0), frame.get(2, 4, 0));
        assert_eq!(padded.crop(3, 5), frame);
        let mask = Mask::from_fn(3, 5, |y, x| y == x);
        let padded = mask.pad_to_multiple(8);
        assert!(padded.get(7, 0) && padded.get(0, 7));
        assert_eq!(padded.crop(3, 5), mask);
    }
}
