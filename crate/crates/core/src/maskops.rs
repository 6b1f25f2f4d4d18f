//! Instance masks, shadow-to-person pairing, and anchor-mask propagation.
//!
//! Segmentation-quality masks are only assumed at a few anchor frames. A
//! shadow is attached to a person when its size is comparable to the
//! person's and it touches the strip along the bottom of the person's
//! bounding box; the merged instance is then carried to the remaining
//! frames along the estimated flow.

use std::collections::VecDeque;

use log::warn;

use crate::error::{Error, Result};
use crate::flow::FlowSet;
use crate::video_io::{Mask, MaskSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Human,
    Shadow,
}

/// Tight bounding box, half-open: columns `x0..x1`, rows `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub frame_index: usize,
    pub kind: InstanceKind,
    pixels: Mask,
    bbox: Option<BBox>,
    area: usize,
}

impl InstanceMask {
    pub fn new(frame_index: usize, pixels: Mask, kind: InstanceKind) -> Self {
        let mut bbox: Option<BBox> = None;
        let mut area = 0;
        for y in 0..pixels.height() {
            for x in 0..pixels.width() {
                if pixels.get(y, x) {
                    area += 1;
                    let b = bbox.get_or_insert(BBox { x0: x, y0: y, x1: x + 1, y1: y + 1 });
                    b.x0 = b.x0.min(x);
                    b.y0 = b.y0.min(y);
                    b.x1 = b.x1.max(x + 1);
                    b.y1 = b.y1.max(y + 1);
                }
            }
        }
        Self {
            frame_index,
            kind,
            pixels,
            bbox,
            area,
        }
    }

    pub fn pixels(&self) -> &Mask {
        &self.pixels
    }

    /// `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.area
    }

    fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.pixels.height() {
            for x in 0..self.pixels.width() {
                if self.pixels.get(y, x) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                }
            }
        }
        let n = self.area.max(1) as f64;
        (sx / n, sy / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingParams {
    pub area_ratio_min: f64,
    pub area_ratio_max: f64,
    /// Fraction of the person's bbox height, measured from the bottom.
    pub lower_band_fraction: f64,
    /// Pixels; the band extends this far below the bbox and a shadow may
    /// sit this far from it.
    pub touch_margin: usize,
}

impl Default for PairingParams {
    fn default() -> Self {
        Self {
            area_ratio_min: 0.05,
            area_ratio_max: 3.0,
            lower_band_fraction: 0.25,
            touch_margin: 3,
        }
    }
}

impl PairingParams {
    fn validate(&self) -> Result<()> {
        if !(self.area_ratio_min > 0.0 && self.area_ratio_min < self.area_ratio_max) {
            return Err(Error::invalid("need 0 < area_ratio_min < area_ratio_max"));
        }
        if !(self.lower_band_fraction > 0.0 && self.lower_band_fraction <= 1.0) {
            return Err(Error::invalid("lower_band_fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    /// `(human index, shadow index)`.
    pub pairs: Vec<(usize, usize)>,
    pub unpaired: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Pairing {
    pub fn shadows_of(&self, human: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().filter(move |(h, _)| *h == human).map(|(_, s)| *s)
    }
}

/// The contact region of a person in continuous pixel coordinates
/// (`x0, y0, x1, y1`, open): the bottom `lower_band_fraction` of the bbox
/// extended `touch_margin` below it, grown by `touch_margin` on every side.
fn contact_region(b: &BBox, params: &PairingParams) -> (f64, f64, f64, f64) {
    let m = params.touch_margin as f64;
    let band_top = b.y1 as f64 - params.lower_band_fraction * b.height() as f64;
    (b.x0 as f64 - m, band_top - m, b.x1 as f64 + m, b.y1 as f64 + 2.0 * m)
}

/// Shadow pixels whose unit square overlaps the region.
fn overlap_count(shadow: &Mask, (rx0, ry0, rx1, ry1): (f64, f64, f64, f64)) -> usize {
    let mut n = 0;
    for y in 0..shadow.height() {
        let (fy0, fy1) = (y as f64, y as f64 + 1.0);
        if fy1 <= ry0 || fy0 >= ry1 {
            continue;
        }
        for x in 0..shadow.width() {
            let (fx0, fx1) = (x as f64, x as f64 + 1.0);
            if fx1 > rx0 && fx0 < rx1 && shadow.get(y, x) {
                n += 1;
            }
        }
    }
    n
}

/// Attaches each shadow to at most one person. A shadow qualifies for a
/// person when `area_ratio_min <= area(s) / area(h) <= area_ratio_max` and
/// it reaches the person's contact region. Among qualifying people the one
/// with the largest contact overlap wins, then the nearest centroid, then
/// the lowest index.
pub fn pair_shadows(humans: &[InstanceMask], shadows: &[InstanceMask], params: &PairingParams) -> Result<Pairing> {
    params.validate()?;
    let all: Vec<&InstanceMask> = humans.iter().chain(shadows).collect();
    if let Some(first) = all.first() {
        for m in &all {
            if m.frame_index != first.frame_index {
                return Err(Error::invalid("instances come from different frames"));
            }
            if !m.pixels.same_shape(&first.pixels) {
                return Err(Error::dims("instance masks differ in shape"));
            }
        }
    }
    let mut out = Pairing::default();
    let mut usable = Vec::new();
    for (i, h) in humans.iter().enumerate() {
        match h.bbox {
            Some(b) => usable.push((i, b, h.centroid())),
            None => {
                let msg = format!("human {i} in frame {} has an empty mask; skipped", h.frame_index);
                warn!("{msg}");
                out.warnings.push(msg);
            }
        }
    }
    for (si, s) in shadows.iter().enumerate() {
        if s.area == 0 {
            out.unpaired.push(si);
            continue;
        }
        let sc = s.centroid();
        let mut best: Option<(usize, usize, f64)> = None;
        for &(hi, ref b, hc) in &usable {
            let ratio = s.area as f64 / humans[hi].area as f64;
            if ratio < params.area_ratio_min || ratio > params.area_ratio_max {
                continue;
            }
            let overlap = overlap_count(&s.pixels, contact_region(b, params));
            if overlap == 0 {
                continue;
            }
            let dist = ((sc.0 - hc.0).powi(2) + (sc.1 - hc.1).powi(2)).sqrt();
            let better = match best {
                None => true,
                Some((_, bo, bd)) => overlap > bo || (overlap == bo && dist < bd),
            };
            if better {
                best = Some((hi, overlap, dist));
            }
        }
        match best {
            Some((hi, _, _)) => out.pairs.push((hi, si)),
            None => out.unpaired.push(si),
        }
    }
    Ok(out)
}

/// Pixelwise union of a person with an optional shadow and any belongings.
pub fn merge_instance(human: &InstanceMask, shadow: Option<&InstanceMask>, belongings: &[InstanceMask]) -> InstanceMask {
    let mut pixels = human.pixels.clone();
    for other in shadow.into_iter().chain(belongings) {
        pixels = pixels.union(&other.pixels);
    }
    InstanceMask::new(human.frame_index, pixels, InstanceKind::Human)
}

/// Square-element dilation with side `2 * radius + 1`, clipped at the
/// border.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    let r = radius as i64;
    let rows = Mask::from_fn(h, w, |y, x| {
        (-r..=r).any(|d| mask.get_signed(y as i64, x as i64 + d))
    });
    Mask::from_fn(h, w, |y, x| (-r..=r).any(|d| rows.get_signed(y as i64 + d, x as i64)))
}

/// 4-connected components in raster order of their first pixel.
pub fn connected_components(mask: &Mask) -> Vec<Mask> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if seen[start] || !mask.get(start / w, start % w) {
            continue;
        }
        let mut comp = Mask::empty(h, w);
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            comp.set(y, x, true);
            let next = [
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
            ];
            for j in next.into_iter().flatten() {
                if !seen[j] && mask.get(j / w, j % w) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Builds the removal mask of one anchor frame from person and shadow
/// segmentations: each person component is merged with the shadow
/// components paired to it. Without pairing, shadows are ignored.
pub fn anchor_instance_mask(
    frame_index: usize,
    humans: &Mask,
    shadows: &Mask,
    pair: Option<&PairingParams>,
) -> Result<(Mask, Pairing)> {
    let people: Vec<InstanceMask> = connected_components(humans)
        .into_iter()
        .map(|m| InstanceMask::new(frame_index, m, InstanceKind::Human))
        .collect();
    let mut merged = Mask::empty(humans.height(), humans.width());
    let Some(params) = pair else {
        for p in &people {
            merged = merged.union(p.pixels());
        }
        return Ok((merged, Pairing::default()));
    };
    let shadow_parts: Vec<InstanceMask> = connected_components(shadows)
        .into_iter()
        .map(|m| InstanceMask::new(frame_index, m, InstanceKind::Shadow))
        .collect();
    let pairing = pair_shadows(&people, &shadow_parts, params)?;
    for (hi, person) in people.iter().enumerate() {
        let attached: Vec<InstanceMask> = pairing.shadows_of(hi).map(|s| shadow_parts[s].clone()).collect();
        let unit = merge_instance(person, None, &attached);
        merged = merged.union(unit.pixels());
    }
    Ok((merged, pairing))
}

/// Carries anchor masks to every frame. Each frame follows the chain from
/// its nearest anchor (ties go to the earlier anchor), warping the binary
/// mask one frame at a time with nearest-neighbour sampling, then dilating
/// by `radius`. Anchor frames keep their masks unchanged.
pub fn propagate_masks(
    frames: usize,
    anchors: &[(usize, Mask)],
    flows: &FlowSet,
    radius: usize,
) -> Result<MaskSeq> {
    if anchors.is_empty() {
        return Err(Error::invalid("mask propagation needs at least one anchor"));
    }
    let (h, w) = (anchors[0].1.height(), anchors[0].1.width());
    for (i, m) in anchors {
        if *i >= frames {
            return Err(Error::invalid(format!("anchor {i} is outside the clip")));
        }
        if m.height() != h || m.width() != w {
            return Err(Error::dims("anchor masks differ in shape"));
        }
    }
    if flows.forward.len() != frames.saturating_sub(1) || flows.backward.len() != frames.saturating_sub(1) {
        return Err(Error::invalid("flows must cover every adjacent frame pair"));
    }
    let mut sorted: Vec<&(usize, Mask)> = anchors.iter().collect();
    sorted.sort_by_key(|(i, _)| *i);
    sorted.dedup_by_key(|(i, _)| *i);

    let nearest = |t: usize| -> usize {
        let mut best = 0;
        for (k, (a, _)) in sorted.iter().enumerate() {
            if a.abs_diff(t) < sorted[best].0.abs_diff(t) {
                best = k;
            }
        }
        best
    };
    let owner: Vec<usize> = (0..frames).map(nearest).collect();

    let mut out: Vec<Option<Mask>> = vec![None; frames];
    for (k, (a, mask)) in sorted.iter().enumerate() {
        let a = *a;
        out[a] = Some(mask.clone());
        let mut current = mask.clone();
        let mut t = a + 1;
        while t < frames && owner[t] == k {
            current = warp_mask(&current, |p| flows.step(t, true, p));
            out[t] = Some(dilate(&current, radius));
            t += 1;
        }
        let mut current = mask.clone();
        let mut t = a;
        while t > 0 && owner[t - 1] == k {
            t -= 1;
            current = warp_mask(&current, |p| flows.step(t, false, p));
            out[t] = Some(dilate(&current, radius));
        }
    }
    MaskSeq::new(out.into_iter().map(|m| m.expect("every frame has an owner")).collect())
}

/// `out(p) = src(step(p))`; steps that fail read as known.
fn warp_mask(src: &Mask, step: impl Fn((usize, usize)) -> Option<(usize, usize)>) -> Mask {
    Mask::from_fn(src.height(), src.width(), |y, x| {
        step((y, x)).is_some_and(|(sy, sx)| src.get(sy, sx))
    })
}
