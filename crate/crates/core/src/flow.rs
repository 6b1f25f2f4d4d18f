//! Block-matching optical flow, backward warping, flow-guided pixel
//! propagation and harmonic hole filling.
//!
//! Flow convention: a [`FlowField`] from frame `a` to frame `b` stores, for
//! every pixel `p` of `a`, the displacement `d` such that `a(p) ≈ b(p + d)`.
//! Warping `b` with that field ([`warp`]) therefore predicts `a`.

use std::collections::VecDeque;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::par::map_range;
use crate::video_io::{Frame, Mask, MaskSeq, VideoClip};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub from_index: usize,
    pub to_index: usize,
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<u8>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 0.0, 0.0)
    }

    /// The same displacement everywhere, fully valid.
    pub fn uniform(height: usize, width: usize, u: f64, v: f64) -> Self {
        let n = height * width;
        Self {
            from_index: 0,
            to_index: 0,
            height,
            width,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![1; n],
        }
    }

    pub fn from_parts(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>, valid: Vec<u8>) -> Result<Self> {
        let n = height * width;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::dims("flow components must have height*width entries"));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("flow must be finite"));
        }
        Ok(Self {
            from_index: 0,
            to_index: 0,
            height,
            width,
            u,
            v,
            valid: valid.into_iter().map(|b| u8::from(b != 0)).collect(),
        })
    }

    pub fn indexed(mut self, from: usize, to: usize) -> Self {
        self.from_index = from;
        self.to_index = to;
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x] != 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v != 0).count()
    }

    pub fn set_invalid(&mut self, y: usize, x: usize) {
        self.valid[y * self.width + x] = 0;
    }

    /// Writes the debug dump: `from, to, H, W` as little-endian u32, then
    /// per pixel in row-major order `u: f32, v: f32, valid: u8`.
    pub fn write_dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.u.len() * 9);
        for h in [self.from_index, self.to_index, self.height, self.width] {
            buf.extend_from_slice(&(h as u32).to_le_bytes());
        }
        for i in 0..self.u.len() {
            buf.extend_from_slice(&(self.u[i] as f32).to_le_bytes());
            buf.extend_from_slice(&(self.v[i] as f32).to_le_bytes());
            buf.push(self.valid[i]);
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read_dump(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        fs::File::open(path.as_ref())?.read_to_end(&mut buf)?;
        let bad = || Error::Decode {
            path: path.as_ref().to_path_buf(),
            reason: "truncated flow dump".into(),
        };
        let word = |i: usize| -> Result<u32> {
            let b = buf.get(i * 4..i * 4 + 4).ok_or_else(bad)?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
        };
        let (from, to, h, w) = (word(0)? as usize, word(1)? as usize, word(2)? as usize, word(3)? as usize);
        let body = buf.get(16..).ok_or_else(bad)?;
        if body.len() != h * w * 9 {
            return Err(bad());
        }
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        let mut valid = Vec::with_capacity(h * w);
        for px in body.chunks_exact(9) {
            u.push(f64::from(f32::from_le_bytes(px[0..4].try_into().expect("4 bytes"))));
            v.push(f64::from(f32::from_le_bytes(px[4..8].try_into().expect("4 bytes"))));
            valid.push(px[8]);
        }
        Ok(Self::from_parts(h, w, u, v, valid)?.indexed(from, to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    pub block: usize,
    pub radius: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { block: 8, radius: 7 }
    }
}

/// Candidate displacements in tie-break order: smallest `|u| + |v|`, then
/// lexicographic `(u, v)`.
fn candidate_order(radius: i64) -> Vec<(i64, i64)> {
    let mut c: Vec<(i64, i64)> = (-radius..=radius)
        .flat_map(|u| (-radius..=radius).map(move |v| (u, v)))
        .collect();
    c.sort_by_key(|&(u, v)| (u.abs() + v.abs(), u, v));
    c
}

/// Block matching: every `block × block` tile of `a` that avoids
/// `exclude_src` gets the integer displacement within `±radius` that
/// minimizes the mean absolute difference against `b`. Target pixels that
/// fall outside `b` or inside `exclude_dst` are left out of the sum; a
/// candidate needs at least half the tile to remain. Excluded tiles and
/// tiles with no admissible candidate are marked invalid with zero flow.
pub fn estimate_flow(
    a: &Frame,
    b: &Frame,
    exclude_src: Option<&Mask>,
    exclude_dst: Option<&Mask>,
    params: &FlowParams,
) -> Result<FlowField> {
    if !a.same_shape(b) {
        return Err(Error::dims("flow frames differ in shape"));
    }
    if params.block == 0 {
        return Err(Error::invalid("flow block size must be positive"));
    }
    let (h, w, c) = (a.height(), a.width(), a.channels());
    for m in [exclude_src, exclude_dst].into_iter().flatten() {
        if m.height() != h || m.width() != w {
            return Err(Error::dims("flow exclusion mask does not match frame"));
        }
    }
    let bs = params.block;
    let (rows, cols) = (h.div_ceil(bs), w.div_ceil(bs));
    let candidates = candidate_order(params.radius as i64);

    let best = map_range(rows * cols, |bi| {
        let (by, bx) = (bi / cols, bi % cols);
        let (y0, y1) = (by * bs, ((by + 1) * bs).min(h));
        let (x0, x1) = (bx * bs, ((bx + 1) * bs).min(w));
        if let Some(m) = exclude_src {
            if (y0..y1).any(|y| (x0..x1).any(|x| m.get(y, x))) {
                return None;
            }
        }
        let area = (y1 - y0) * (x1 - x0);
        let mut best: Option<((i64, i64), f64)> = None;
        for &(du, dv) in &candidates {
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in y0..y1 {
                let ty = y as i64 + dv;
                if ty < 0 || ty >= h as i64 {
                    continue;
                }
                for x in x0..x1 {
                    let tx = x as i64 + du;
                    if tx < 0 || tx >= w as i64 {
                        continue;
                    }
                    let (ty, tx) = (ty as usize, tx as usize);
                    if exclude_dst.is_some_and(|m| m.get(ty, tx)) {
                        continue;
                    }
                    for ch in 0..c {
                        sum += (a.get(y, x, ch) - b.get(ty, tx, ch)).abs();
                    }
                    n += 1;
                }
            }
            if 2 * n < area || n == 0 {
                continue;
            }
            let cost = sum / n as f64;
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some(((du, dv), cost));
            }
        }
        best.map(|(d, _)| d)
    });

    let mut field = FlowField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            match best[(y / bs) * cols + x / bs] {
                Some((du, dv)) => {
                    field.u[i] = du as f64;
                    field.v[i] = dv as f64;
                }
                None => field.valid[i] = 0,
            }
        }
    }
    Ok(field)
}

/// Replaces invalid vectors with the vector of the nearest valid pixel
/// (4-connected breadth-first order, seeded in raster order) and marks them
/// valid. A field with no valid pixel becomes zero flow.
pub fn complete_flow(flow: &FlowField) -> FlowField {
    let mut out = flow.clone();
    if flow.valid_count() == 0 {
        out.u.fill(0.0);
        out.v.fill(0.0);
        out.valid.fill(1);
        return out;
    }
    let (h, w) = (flow.height, flow.width);
    let mut queue: VecDeque<usize> = (0..h * w).filter(|&i| flow.valid[i] != 0).collect();
    while let Some(i) = queue.pop_front() {
        let (y, x) = (i / w, i % w);
        let neighbors = [
            (y > 0).then(|| i - w),
            (y + 1 < h).then(|| i + w),
            (x > 0).then(|| i - 1),
            (x + 1 < w).then(|| i + 1),
        ];
        for j in neighbors.into_iter().flatten() {
            if out.valid[j] == 0 {
                out.valid[j] = 1;
                out.u[j] = out.u[i];
                out.v[j] = out.v[i];
                queue.push_back(j);
            }
        }
    }
    out
}

/// Output of [`warp`]; `covered[y * width + x]` is false where the sample
/// left the frame or the flow was invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub frame: Frame,
    pub covered: Vec<bool>,
}

impl Warped {
    pub fn coverage_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }
}

/// Backward warp with bilinear sampling: `out(p) = frame(p + flow(p))`.
pub fn warp(frame: &Frame, flow: &FlowField) -> Result<Warped> {
    let (h, w, c) = (frame.height(), frame.width(), frame.channels());
    if flow.height != h || flow.width != w {
        return Err(Error::dims("flow does not match frame"));
    }
    let mut data = vec![0.0; h * w * c];
    let mut covered = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !flow.is_valid(y, x) {
                continue;
            }
            let (u, v) = flow.at(y, x);
            let (sx, sy) = (x as f64 + u, y as f64 + v);
            let (fx, fy) = (sx.floor(), sy.floor());
            let (ax, ay) = (sx - fx, sy - fy);
            let (x0, y0) = (fx as i64, fy as i64);
            let x1 = if ax > 0.0 { x0 + 1 } else { x0 };
            let y1 = if ay > 0.0 { y0 + 1 } else { y0 };
            if x0 < 0 || y0 < 0 || x1 >= w as i64 || y1 >= h as i64 {
                continue;
            }
            let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
            covered[y * w + x] = true;
            for ch in 0..c {
                let top = frame.get(y0, x0, ch) * (1.0 - ax) + frame.get(y0, x1, ch) * ax;
                let bottom = frame.get(y1, x0, ch) * (1.0 - ax) + frame.get(y1, x1, ch) * ax;
                data[(y * w + x) * c + ch] = top * (1.0 - ay) + bottom * ay;
            }
        }
    }
    Ok(Warped {
        frame: Frame::from_clamped(h, w, c, data),
        covered,
    })
}

/// Flows between adjacent frames in both directions:
/// `forward[t]` maps frame `t` to `t + 1`, `backward[t]` maps `t + 1` to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    pub forward: Vec<FlowField>,
    pub backward: Vec<FlowField>,
}

impl FlowSet {
    /// Zero flow everywhere (static scene).
    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self::uniform(frames, height, width, (0.0, 0.0))
    }

    /// A global translation: content moves by `(dx, dy)` per frame, so
    /// `forward` is `(dx, dy)` and `backward` is `(-dx, -dy)`.
    pub fn uniform(frames: usize, height: usize, width: usize, (dx, dy): (f64, f64)) -> Self {
        let n = frames.saturating_sub(1);
        Self {
            forward: (0..n)
                .map(|t| FlowField::uniform(height, width, dx, dy).indexed(t, t + 1))
                .collect(),
            backward: (0..n)
                .map(|t| FlowField::uniform(height, width, -dx, -dy).indexed(t + 1, t))
                .collect(),
        }
    }

    fn check(&self, frames: usize, height: usize, width: usize) -> Result<()> {
        let n = frames.saturating_sub(1);
        if self.forward.len() != n || self.backward.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} flows per direction, got {} / {}",
                self.forward.len(),
                self.backward.len()
            )));
        }
        if self
            .forward
            .iter()
            .chain(&self.backward)
            .any(|f| f.height != height || f.width != width)
        {
            return Err(Error::dims("flow does not match clip"));
        }
        Ok(())
    }

    /// One chain step from frame `t` towards `t - 1` (`backward == true`)
    /// or `t + 1`, with nearest-neighbour lookup. `None` when the flow is
    /// invalid or the step leaves the frame.
    pub(crate) fn step(&self, t: usize, backward: bool, (y, x): (usize, usize)) -> Option<(usize, usize)> {
        let field = if backward { &self.backward[t - 1] } else { &self.forward[t] };
        if !field.is_valid(y, x) {
            return None;
        }
        let (u, v) = field.at(y, x);
        let (ny, nx) = ((y as f64 + v).round(), (x as f64 + u).round());
        if ny < 0.0 || nx < 0.0 || ny >= field.height as f64 || nx >= field.width as f64 {
            return None;
        }
        Some((ny as usize, nx as usize))
    }
}

/// Estimates adjacent-pair flows for a whole clip. Hole pixels are kept out
/// of the matching on both ends; with `complete` the excluded tiles inherit
/// the nearest valid vector.
pub fn estimate_clip_flows(
    clip: &VideoClip,
    holes: Option<&MaskSeq>,
    params: &FlowParams,
    complete: bool,
) -> Result<FlowSet> {
    if let Some(h) = holes {
        if !h.matches(clip) {
            return Err(Error::dims("holes do not match clip"));
        }
    }
    let pairs = clip.len().saturating_sub(1);
    let hole = |i: usize| holes.map(|h| h.mask(i));
    let jobs = map_range(2 * pairs, |j| {
        let (t, backward) = (j / 2, j % 2 == 1);
        let (src, dst) = if backward { (t + 1, t) } else { (t, t + 1) };
        let f = estimate_flow(clip.frame(src), clip.frame(dst), hole(src), hole(dst), params)?;
        let f = if complete { complete_flow(&f) } else { f };
        Ok::<_, Error>(f.indexed(src, dst))
    });
    let mut forward = Vec::with_capacity(pairs);
    let mut backward = Vec::with_capacity(pairs);
    for (j, f) in jobs.into_iter().enumerate() {
        if j % 2 == 0 {
            forward.push(f?);
        } else {
            backward.push(f?);
        }
    }
    Ok(FlowSet { forward, backward })
}

/// Fills hole pixels by following flow chains to the nearest frame where the
/// tracked location is known, copying that pixel. Shorter chains win; at
/// equal length the backward (earlier) frame wins. Only original known
/// pixels are ever copied, so the result does not depend on fill order.
pub fn propagate_pixels(
    clip: &VideoClip,
    holes: &MaskSeq,
    flows: &FlowSet,
    max_chain: usize,
) -> Result<(VideoClip, MaskSeq)> {
    if !holes.matches(clip) {
        return Err(Error::dims("holes do not match clip"));
    }
    let (frames, h, w, c) = (clip.len(), clip.height(), clip.width(), clip.channels());
    flows.check(frames, h, w)?;

    let results = map_range(frames, |t| {
        let mut frame = clip.frame(t).clone();
        let mut residual = holes.mask(t).clone();
        for y in 0..h {
            for x in 0..w {
                if !holes.mask(t).get(y, x) {
                    continue;
                }
                if let Some((s, sy, sx)) = trace_known(holes, flows, t, (y, x), max_chain) {
                    for ch in 0..c {
                        frame.set(y, x, ch, clip.frame(s).get(sy, sx, ch));
                    }
                    residual.set(y, x, false);
                }
            }
        }
        (frame, residual)
    });
    let (frames, residual): (Vec<Frame>, Vec<Mask>) = results.into_iter().unzip();
    Ok((clip.with_frames(frames)?, MaskSeq::new(residual)?))
}

fn trace_known(
    holes: &MaskSeq,
    flows: &FlowSet,
    t: usize,
    start: (usize, usize),
    max_chain: usize,
) -> Option<(usize, usize, usize)> {
    let frames = holes.len();
    let mut back = Some(start);
    let mut fwd = Some(start);
    for k in 1..=max_chain {
        if back.is_none() && fwd.is_none() {
            break;
        }
        if let Some(p) = back {
            back = if k <= t { flows.step(t - k + 1, true, p) } else { None };
            if let Some((y, x)) = back {
                if !holes.mask(t - k).get(y, x) {
                    return Some((t - k, y, x));
                }
            }
        }
        if let Some(p) = fwd {
            fwd = if t + k < frames { flows.step(t + k - 1, false, p) } else { None };
            if let Some((y, x)) = fwd {
                if !holes.mask(t + k).get(y, x) {
                    return Some((t + k, y, x));
                }
            }
        }
    }
    None
}

/// Result of [`fill_holes`]. `fallback` is set when the frame had no known
/// pixel and was filled with the constant 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct Filled {
    pub frame: Frame,
    pub fallback: bool,
    pub iterations: usize,
}

pub const FILL_TOLERANCE: f64 = 1e-4;

/// Discrete harmonic fill: hole pixels start at the mean of the known
/// pixels bordering the hole, then Gauss–Seidel sweeps replace each hole
/// pixel by the mean of its in-frame 4-neighbours until the largest update
/// drops below [`FILL_TOLERANCE`] (at most `10 * max(H, W)` sweeps).
pub fn fill_holes(frame: &Frame, hole: &Mask) -> Result<Filled> {
    let (h, w, c) = (frame.height(), frame.width(), frame.channels());
    if hole.height() != h || hole.width() != w {
        return Err(Error::dims("hole mask does not match frame"));
    }
    if hole.is_empty() {
        return Ok(Filled {
            frame: frame.clone(),
            fallback: false,
            iterations: 0,
        });
    }
    if hole.count() == h * w {
        return Ok(Filled {
            frame: Frame::filled(h, w, c, 0.5),
            fallback: true,
            iterations: 0,
        });
    }
    let neighbors = |y: usize, x: usize| {
        [
            (y > 0).then(|| (y - 1, x)),
            (y + 1 < h).then(|| (y + 1, x)),
            (x > 0).then(|| (y, x - 1)),
            (x + 1 < w).then(|| (y, x + 1)),
        ]
        .into_iter()
        .flatten()
    };

    let mut seed = vec![0.0; c];
    let mut seed_n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !hole.get(y, x) && neighbors(y, x).any(|(ny, nx)| hole.get(ny, nx)) {
                for (ch, s) in seed.iter_mut().enumerate() {
                    *s += frame.get(y, x, ch);
                }
                seed_n += 1;
            }
        }
    }
    let mut out = frame.clone();
    let hole_pixels: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| hole.get(y, x))
        .collect();
    for &(y, x) in &hole_pixels {
        for (ch, s) in seed.iter().enumerate() {
            out.set(y, x, ch, s / seed_n as f64);
        }
    }
    let max_iter = 10 * h.max(w);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for &(y, x) in &hole_pixels {
            for ch in 0..c {
                let (mut sum, mut n) = (0.0, 0usize);
                for (ny, nx) in neighbors(y, x) {
                    sum += out.get(ny, nx, ch);
                    n += 1;
                }
                let v = sum / n as f64;
                delta = delta.max((v - out.get(y, x, ch)).abs());
                out.set(y, x, ch, v);
            }
        }
        if delta < FILL_TOLERANCE {
            break;
        }
    }
    Ok(Filled {
        frame: out,
        fallback: false,
        iterations,
    })
}
