//! A single fully inpainted reference frame carried through sampling.
//!
//! The reference is inserted as an extra frame with an empty hole mask, so
//! latent replacement keeps it fixed and neighbouring windows can draw on
//! it. Its latent is dropped again before decoding.

use ndarray::Axis;

use crate::error::{Error, Result};
use crate::flow::{Filled, fill_holes};
use crate::latent::LatentClip;
use crate::video_io::{Frame, Mask, MaskSeq, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefPolicy {
    #[default]
    MinHoleArea,
    Explicit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InsertPosition {
    #[default]
    Prepend,
    /// At the source frame's own index, ahead of it.
    Adjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefSpec {
    pub index: usize,
    pub policy: RefPolicy,
    pub position: InsertPosition,
}

impl RefSpec {
    pub fn slot(&self) -> usize {
        match self.position {
            InsertPosition::Prepend => 0,
            InsertPosition::Adjacent => self.index,
        }
    }
}

/// Smallest hole wins, the earliest frame on ties.
pub fn select_reference(holes: &MaskSeq, policy: RefPolicy) -> Result<usize> {
    if holes.is_empty() {
        return Err(Error::EmptyClip);
    }
    match policy {
        RefPolicy::Explicit(i) if i < holes.len() => Ok(i),
        RefPolicy::Explicit(i) => Err(Error::invalid(format!(
            "reference index {i} is outside 0..{}",
            holes.len()
        ))),
        RefPolicy::MinHoleArea => Ok(holes
            .masks()
            .iter()
            .enumerate()
            .min_by_key(|(i, m)| (m.count(), *i))
            .map(|(i, _)| i)
            .expect("non-empty")),
    }
}

/// Single-frame completion: the flow-completed frame with its residual
/// holes harmonically filled.
pub fn inpaint_reference(frame: &Frame, hole: &Mask, flow_completed: &Frame, residual: &Mask) -> Result<Filled> {
    if !frame.same_shape(flow_completed) || !hole.same_shape(residual) || hole.height() != frame.height() || hole.width() != frame.width() {
        return Err(Error::dims("reference inputs differ in shape"));
    }
    fill_holes(flow_completed, residual)
}

/// Returns the extended clip and masks and the reference's slot.
pub fn insert_reference(clip: &VideoClip, holes: &MaskSeq, reference: &Frame, spec: &RefSpec) -> Result<(VideoClip, MaskSeq, usize)> {
    if !holes.matches(clip) {
        return Err(Error::dims("mask sequence does not match clip"));
    }
    if !reference.same_shape(clip.frame(0)) {
        return Err(Error::dims("reference frame differs in shape from the clip"));
    }
    if spec.index >= clip.len() {
        return Err(Error::invalid(format!("reference index {} is outside the clip", spec.index)));
    }
    let slot = spec.slot();
    let mut frames = clip.frames().to_vec();
    frames.insert(slot, reference.clone());
    let mut masks = holes.masks().to_vec();
    masks.insert(slot, Mask::empty(holes.height(), holes.width()));
    Ok((clip.with_frames(frames)?, MaskSeq::new(masks)?, slot))
}

pub fn remove_reference(lat: &LatentClip, slot: usize) -> Result<LatentClip> {
    if slot >= lat.frames() {
        return Err(Error::invalid(format!("reference slot {slot} is outside 0..{}", lat.frames())));
    }
    let keep: Vec<usize> = (0..lat.frames()).filter(|&f| f != slot).collect();
    LatentClip::new(lat.data().select(Axis(0), &keep), lat.fps())
}

/// Drops the reference frame from a pixel clip.
pub fn remove_reference_frame(clip: &VideoClip, slot: usize) -> Result<VideoClip> {
    if slot >= clip.len() || clip.len() < 2 {
        return Err(Error::invalid(format!("reference slot {slot} is not removable")));
    }
    let mut frames = clip.frames().to_vec();
    frames.remove(slot);
    clip.with_frames(frames)
}
