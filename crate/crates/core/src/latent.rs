//! A fixed linear block codec standing in for a learned autoencoder.
//!
//! Each 8×8 block of each image channel is projected onto four orthonormal
//! functions: a constant, a horizontal ramp, a vertical ramp and their
//! product. With centred coordinates `xs = j - 3.5`, `ys = i - 3.5`:
//!
//! | channel | basis function        |
//! |---------|-----------------------|
//! | 0       | `1 / 8`               |
//! | 1       | `xs / sqrt(336)`      |
//! | 2       | `ys / sqrt(336)`      |
//! | 3       | `xs * ys / 42`        |
//!
//! A constant block of value `v` therefore encodes to `8 v` in channel 0
//! and zeros elsewhere. Decoding rebuilds each block as the bilinear
//! surface spanned by the same functions, so `decode ∘ encode` is the
//! orthogonal projection onto block-wise bilinear images.

use ndarray::{Array3, Array4, Axis, s};

use crate::error::{Error, Result};
use crate::par::map_range;
use crate::video_io::{Frame, VideoClip};

pub const BLOCK: usize = 8;
/// Latent channels produced per image channel.
pub const FUNCTIONALS: usize = 4;
/// Channel 0 of a constant block equals `K0` times its value.
pub const K0: f64 = 8.0;

/// Pixel tensor in `[frames, channels, height, width]` order.
pub type PixelTensor = Array4<f64>;

fn basis() -> [[f64; BLOCK * BLOCK]; FUNCTIONALS] {
    let mut b = [[0.0; BLOCK * BLOCK]; FUNCTIONALS];
    let ramp = 336f64.sqrt();
    for i in 0..BLOCK {
        for j in 0..BLOCK {
            let (xs, ys) = (j as f64 - 3.5, i as f64 - 3.5);
            let k = i * BLOCK + j;
            b[0][k] = 1.0 / 8.0;
            b[1][k] = xs / ramp;
            b[2][k] = ys / ramp;
            b[3][k] = xs * ys / 42.0;
        }
    }
    b
}

/// Latent codes in `[frames, 4 * image channels, h, w]` order, where
/// image channel `k` owns latent channels `4k..4k + 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    data: Array4<f64>,
    fps: f64,
}

impl LatentClip {
    pub fn new(data: Array4<f64>, fps: f64) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLatent);
        }
        if data.shape()[1] == 0 || !data.shape()[1].is_multiple_of(FUNCTIONALS) {
            return Err(Error::dims(format!(
                "latent channel count {} is not a positive multiple of {FUNCTIONALS}",
                data.shape()[1]
            )));
        }
        Ok(Self { data, fps })
    }

    pub fn zeros(frames: usize, channels: usize, h: usize, w: usize, fps: f64) -> Self {
        Self {
            data: Array4::zeros((frames, channels, h, w)),
            fps,
        }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }
}

pub fn clip_to_tensor(clip: &VideoClip) -> PixelTensor {
    let (h, w, c) = (clip.height(), clip.width(), clip.channels());
    let mut out = Array4::zeros((clip.len(), c, h, w));
    for (f, frame) in clip.frames().iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    out[[f, k, y, x]] = frame.get(y, x, k);
                }
            }
        }
    }
    out
}

/// Converts a pixel tensor to a clip, clamping into `[0, 1]`.
pub fn tensor_to_clip(t: &PixelTensor, fps: f64) -> Result<VideoClip> {
    let (frames, c, h, w) = t.dim();
    let out = (0..frames)
        .map(|f| {
            let mut data = Vec::with_capacity(h * w * c);
            for y in 0..h {
                for x in 0..w {
                    for k in 0..c {
                        data.push(t[[f, k, y, x]]);
                    }
                }
            }
            Frame::from_clamped(h, w, c, data)
        })
        .collect();
    VideoClip::new(out, fps)
}

/// Encodes a clip whose height and width are multiples of 8.
pub fn encode(clip: &VideoClip) -> Result<LatentClip> {
    Ok(LatentClip {
        data: encode_tensor(&clip_to_tensor(clip))?,
        fps: clip.fps(),
    })
}

/// Encodes an arbitrary real pixel tensor.
pub fn encode_tensor(t: &PixelTensor) -> Result<Array4<f64>> {
    let (frames, c, hh, ww) = t.dim();
    if hh % BLOCK != 0 || ww % BLOCK != 0 {
        return Err(Error::invalid(format!(
            "{hh}x{ww} is not a multiple of {BLOCK}; pad the clip first"
        )));
    }
    let (h, w) = (hh / BLOCK, ww / BLOCK);
    let b = basis();
    let per_frame = map_range(frames, |f| {
        let mut out = Array3::<f64>::zeros((c * FUNCTIONALS, h, w));
        for k in 0..c {
            for by in 0..h {
                for bx in 0..w {
                    let mut acc = [0.0; FUNCTIONALS];
                    for i in 0..BLOCK {
                        for j in 0..BLOCK {
                            let v = t[[f, k, by * BLOCK + i, bx * BLOCK + j]];
                            for (a, basis) in acc.iter_mut().zip(&b) {
                                *a += basis[i * BLOCK + j] * v;
                            }
                        }
                    }
                    for (q, a) in acc.into_iter().enumerate() {
                        out[[k * FUNCTIONALS + q, by, bx]] = a;
                    }
                }
            }
        }
        out
    });
    stack_frames(per_frame, (c * FUNCTIONALS, h, w))
}

/// Decodes to pixels and clamps into `[0, 1]`.
pub fn decode(lat: &LatentClip) -> Result<VideoClip> {
    tensor_to_clip(&decode_raw(lat)?, lat.fps)
}

/// Decodes without clamping.
pub fn decode_raw(lat: &LatentClip) -> Result<PixelTensor> {
    if lat.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidLatent);
    }
    let (frames, lc, h, w) = lat.data.dim();
    let c = lc / FUNCTIONALS;
    let b = basis();
    let per_frame = map_range(frames, |f| {
        let mut out = Array3::<f64>::zeros((c, h * BLOCK, w * BLOCK));
        for k in 0..c {
            for by in 0..h {
                for bx in 0..w {
                    let coef: Vec<f64> = (0..FUNCTIONALS)
                        .map(|q| lat.data[[f, k * FUNCTIONALS + q, by, bx]])
                        .collect();
                    for i in 0..BLOCK {
                        for j in 0..BLOCK {
                            let v: f64 = coef.iter().zip(&b).map(|(a, basis)| a * basis[i * BLOCK + j]).sum();
                            out[[k, by * BLOCK + i, bx * BLOCK + j]] = v;
                        }
                    }
                }
            }
        }
        out
    });
    stack_frames(per_frame, (c, h * BLOCK, w * BLOCK))
}

fn stack_frames(frames: Vec<Array3<f64>>, dim: (usize, usize, usize)) -> Result<Array4<f64>> {
    let mut out = Array4::zeros((frames.len(), dim.0, dim.1, dim.2));
    for (f, a) in frames.into_iter().enumerate() {
        out.slice_mut(s![f, .., .., ..]).assign(&a);
    }
    debug_assert_eq!(out.len_of(Axis(1)), dim.0);
    Ok(out)
}
