//! Noise schedule, v-prediction algebra, deterministic DDIM sampling with
//! latent replacement, analytic denoisers and the training losses.

use ndarray::{Array, Array4, ArrayView3, ArrayView4, Axis, Dimension, Zip};

use crate::error::{Error, Result};
use crate::latent::{LatentClip, decode};
use crate::video_io::{KnownMap, VideoClip};

pub const BETA_START: f64 = 8.5e-4;
pub const BETA_END: f64 = 1.2e-2;
pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_INFERENCE_STEPS: usize = 8;

/// Below this `1 - ᾱ` the noise estimate is taken to be zero.
const SIGNAL_ONLY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    train_steps: usize,
    /// `alpha_bar[t]` for `t = 0..=train_steps`, with `alpha_bar[0] = 1`.
    alpha_bar: Vec<f64>,
    /// Strictly decreasing training steps visited at inference.
    indices: Vec<usize>,
}

impl Schedule {
    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn inference_steps(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `ᾱ_t`; `t = 0` is the clean boundary.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `(ᾱ_t, ᾱ_prev)` for 0-based step ordinal `k`; the step after the last
    /// index lands on `ᾱ = 1`.
    pub fn step_levels(&self, k: usize) -> (f64, f64) {
        let t = self.indices[k];
        let prev = self.indices.get(k + 1).map_or(1.0, |&p| self.alpha_bar[p]);
        (self.alpha_bar[t], prev)
    }
}

/// Scaled-linear betas between [`BETA_START`] and [`BETA_END`]; inference
/// visits `round(k * T / n)` for `k = n, …, 1`.
pub fn make_schedule(train_steps: usize, inference_steps: usize) -> Result<Schedule> {
    if train_steps == 0 || inference_steps == 0 || inference_steps > train_steps {
        return Err(Error::invalid(format!(
            "need 1 <= inference_steps ({inference_steps}) <= train_steps ({train_steps})"
        )));
    }
    let (s0, s1) = (BETA_START.sqrt(), BETA_END.sqrt());
    let mut alpha_bar = Vec::with_capacity(train_steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for i in 1..=train_steps {
        let frac = if train_steps == 1 { 0.0 } else { (i - 1) as f64 / (train_steps - 1) as f64 };
        let beta = (s0 + frac * (s1 - s0)).powi(2);
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    let indices = (1..=inference_steps)
        .rev()
        .map(|k| ((k * train_steps) as f64 / inference_steps as f64).round() as usize)
        .collect();
    Ok(Schedule {
        train_steps,
        alpha_bar,
        indices,
    })
}

/// `v = √ᾱ ε − √(1−ᾱ) x0`.
pub fn v_from<D: Dimension>(x0: &Array<f64, D>, eps: &Array<f64, D>, abar: f64) -> Array<f64, D> {
    let (a, b) = (abar.sqrt(), (1.0 - abar).sqrt());
    Zip::from(eps).and(x0).map_collect(|&e, &x| a * e - b * x)
}

/// `(x0̂, ε̂) = (√ᾱ z − √(1−ᾱ) v, √(1−ᾱ) z + √ᾱ v)`.
pub fn x0_eps_from_v<D: Dimension>(z: &Array<f64, D>, v: &Array<f64, D>, abar: f64) -> (Array<f64, D>, Array<f64, D>) {
    let (a, b) = (abar.sqrt(), (1.0 - abar).sqrt());
    let x0 = Zip::from(z).and(v).map_collect(|&z, &v| a * z - b * v);
    let eps = Zip::from(z).and(v).map_collect(|&z, &v| b * z + a * v);
    (x0, eps)
}

/// Deterministic DDIM update (η = 0).
pub fn ddim_step<D: Dimension>(z: &Array<f64, D>, v: &Array<f64, D>, abar: f64, abar_prev: f64) -> Array<f64, D> {
    if abar_prev == abar {
        return z.clone();
    }
    let (x0, eps) = x0_eps_from_v(z, v, abar);
    if abar_prev == 1.0 {
        return x0;
    }
    let (a, b) = (abar_prev.sqrt(), (1.0 - abar_prev).sqrt());
    Zip::from(&x0).and(&eps).map_collect(|&x, &e| a * x + b * e)
}

/// The `v` that makes `z` decode to `x0` at level `ᾱ`.
fn v_toward<D: Dimension>(z: &Array<f64, D>, x0: &Array<f64, D>, abar: f64) -> Array<f64, D> {
    let eps = if 1.0 - abar < SIGNAL_ONLY {
        Array::zeros(z.raw_dim())
    } else {
        let (a, b) = (abar.sqrt(), (1.0 - abar).sqrt());
        Zip::from(z).and(x0).map_collect(|&z, &x| (z - a * x) / b)
    };
    v_from(x0, &eps, abar)
}

/// Where a denoiser call sits within a fused run.
#[derive(Debug, Clone, Copy)]
pub struct WindowInfo<'a> {
    /// Clip frame indices in window order.
    pub frames: &'a [usize],
    /// Position of the window among all windows sorted by first frame.
    pub ordinal: usize,
}

/// Inputs of one denoiser call. Tensors hold the window's frames only.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub z_t: ArrayView4<'a, f64>,
    pub known: ArrayView3<'a, f64>,
    pub z_masked: ArrayView4<'a, f64>,
    pub abar: f64,
    /// 0-based ordinal along the inference trajectory.
    pub step: usize,
    pub window: WindowInfo<'a>,
}

/// Predicts `v̂` with the shape of `z_t`.
pub trait Denoiser: Sync {
    fn predict_v(&self, req: &DenoiseRequest<'_>) -> Result<Array4<f64>>;
}

fn gather(data: &Array4<f64>, frames: &[usize], what: &str) -> Result<Array4<f64>> {
    if let Some(&f) = frames.iter().find(|&&f| f >= data.shape()[0]) {
        return Err(Error::ContractViolation(format!("{what} has no frame {f}")));
    }
    Ok(data.select(Axis(0), frames))
}

fn check_request(req: &DenoiseRequest<'_>, held: &Array4<f64>) -> Result<()> {
    let shape = req.z_t.shape();
    if req.z_masked.shape() != shape
        || shape[0] != req.window.frames.len()
        || req.known.shape() != [shape[0], shape[2], shape[3]]
        || held.shape()[1..] != shape[1..]
    {
        return Err(Error::ContractViolation(format!(
            "request z_t {:?}, z_masked {:?}, known {:?}, held {:?}, {} frames",
            shape,
            req.z_masked.shape(),
            req.known.shape(),
            held.shape(),
            req.window.frames.len()
        )));
    }
    Ok(())
}

/// Soft blend `m · z_masked + (1 − m) · prior`, broadcasting `m` over
/// channels.
fn known_blend(known: ArrayView3<'_, f64>, z_masked: ArrayView4<'_, f64>, prior: &Array4<f64>) -> Array4<f64> {
    let mut out = prior.clone();
    for ((f, c, y, x), v) in out.indexed_iter_mut() {
        let m = known[[f, y, x]];
        *v = m * z_masked[[f, c, y, x]] + (1.0 - m) * *v;
    }
    out
}

/// Steers every trajectory to a fixed target latent.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    target: Array4<f64>,
}

impl OracleDenoiser {
    pub fn new(target: &LatentClip) -> Self {
        Self {
            target: target.data().clone(),
        }
    }
}

impl Denoiser for OracleDenoiser {
    fn predict_v(&self, req: &DenoiseRequest<'_>) -> Result<Array4<f64>> {
        check_request(req, &self.target)?;
        let target = gather(&self.target, req.window.frames, "oracle target")?;
        Ok(v_toward(&req.z_t.to_owned(), &target, req.abar))
    }
}

/// Predicts known content where the map says so and a fixed prior
/// elsewhere.
#[derive(Debug, Clone)]
pub struct PriorDenoiser {
    prior: Array4<f64>,
}

impl PriorDenoiser {
    pub fn new(prior: &LatentClip) -> Self {
        Self {
            prior: prior.data().clone(),
        }
    }

    fn base(&self, req: &DenoiseRequest<'_>) -> Result<Array4<f64>> {
        check_request(req, &self.prior)?;
        let prior = gather(&self.prior, req.window.frames, "prior")?;
        Ok(known_blend(req.known, req.z_masked, &prior))
    }
}

impl Denoiser for PriorDenoiser {
    fn predict_v(&self, req: &DenoiseRequest<'_>) -> Result<Array4<f64>> {
        let x0 = self.base(req)?;
        Ok(v_toward(&req.z_t.to_owned(), &x0, req.abar))
    }
}

/// A prior denoiser whose windows disagree in the hole: window `k` pulls
/// its estimate toward `+amplitude` (even `k`) or `−amplitude` (odd `k`)
/// on top of the prior.
///
/// The estimate tracks the state: with `Q` the prior estimate and
/// `ε_c = (z_T − √ᾱ_T Q) / √(1 − ᾱ_T)` the noise a prior-only run would
/// carry, the state's offset from that run is
/// `Δ = (z_t − √ᾱ Q − √(1 − ᾱ) ε_c) / √ᾱ`, and the hole estimate is
/// `Q + Δ + pull · (±amplitude − Δ)`. Blending states across windows
/// therefore blends their offsets, which is what fusion acts on.
#[derive(Debug, Clone)]
pub struct SeamProbeDenoiser {
    prior: PriorDenoiser,
    noise: Array4<f64>,
    abar_start: f64,
    amplitude: f64,
    pull: f64,
}

pub const DEFAULT_PROBE_PULL: f64 = 0.5;

impl SeamProbeDenoiser {
    /// `noise` is the run's initial state `z_T` and `abar_start` the level
    /// of the first inference step.
    pub fn new(prior: &LatentClip, noise: &LatentClip, abar_start: f64, amplitude: f64, pull: f64) -> Result<Self> {
        if prior.data().shape() != noise.data().shape() {
            return Err(Error::dims("probe prior and noise differ in shape"));
        }
        if !(0.0..=1.0).contains(&pull) || !(abar_start > 0.0 && abar_start < 1.0) {
            return Err(Error::invalid("probe needs pull in [0, 1] and ᾱ_T in (0, 1)"));
        }
        Ok(Self {
            prior: PriorDenoiser::new(prior),
            noise: noise.data().clone(),
            abar_start,
            amplitude,
            pull,
        })
    }
}

impl Denoiser for SeamProbeDenoiser {
    fn predict_v(&self, req: &DenoiseRequest<'_>) -> Result<Array4<f64>> {
        let q = self.prior.base(req)?;
        let noise = gather(&self.noise, req.window.frames, "probe noise")?;
        let (a0, b0) = (self.abar_start.sqrt(), (1.0 - self.abar_start).sqrt());
        let (a, b) = (req.abar.sqrt(), (1.0 - req.abar).sqrt());
        let sign = if req.window.ordinal.is_multiple_of(2) { 1.0 } else { -1.0 };
        let target = sign * self.amplitude;
        let mut x0 = q.clone();
        for ((f, c, y, x), out) in x0.indexed_iter_mut() {
            let qv = q[[f, c, y, x]];
            let eps_c = (noise[[f, c, y, x]] - a0 * qv) / b0;
            let delta = (req.z_t[[f, c, y, x]] - a * qv - b * eps_c) / a;
            let hole = 1.0 - req.known[[f, y, x]];
            *out = qv + hole * (delta + self.pull * (target - delta));
        }
        Ok(v_toward(&req.z_t.to_owned(), &x0, req.abar))
    }
}

/// Clip-level conditioning shared by all windows.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning<'a> {
    pub known: &'a KnownMap,
    pub z_masked: &'a Array4<f64>,
    /// Encoded original and initial noise; when present, cells with
    /// `known ≥ 0.5` are replaced by the original noised to the level
    /// reached after each step.
    pub reinject: Option<(&'a Array4<f64>, &'a Array4<f64>)>,
}

/// Runs inference step `k` on one window's state in place.
pub fn step_window(
    z: &mut Array4<f64>,
    window: WindowInfo<'_>,
    cond: &Conditioning<'_>,
    denoiser: &dyn Denoiser,
    sched: &Schedule,
    k: usize,
) -> Result<()> {
    let (abar, abar_prev) = sched.step_levels(k);
    let known = cond.known.select(Axis(0), window.frames);
    let z_masked = cond.z_masked.select(Axis(0), window.frames);
    let req = DenoiseRequest {
        z_t: z.view(),
        known: known.view(),
        z_masked: z_masked.view(),
        abar,
        step: k,
        window,
    };
    let v = denoiser.predict_v(&req)?;
    if v.shape() != z.shape() {
        return Err(Error::ContractViolation(format!(
            "denoiser returned {:?} for input {:?}",
            v.shape(),
            z.shape()
        )));
    }
    *z = ddim_step(z, &v, abar, abar_prev);
    if let Some((orig, noise)) = cond.reinject {
        let (a, b) = (abar_prev.sqrt(), (1.0 - abar_prev).sqrt());
        for (wf, &f) in window.frames.iter().enumerate() {
            for ((c, y, x), v) in z.index_axis_mut(Axis(0), wf).indexed_iter_mut() {
                if cond.known[[f, y, x]] >= 0.5 {
                    *v = a * orig[[f, c, y, x]] + b * noise[[f, c, y, x]];
                }
            }
        }
    }
    Ok(())
}

fn check_conditioning(z_t: &LatentClip, known: &KnownMap, z_masked: &LatentClip) -> Result<()> {
    let s = z_t.data().shape();
    if z_masked.data().shape() != s || known.shape() != [s[0], s[2], s[3]] {
        return Err(Error::dims(format!(
            "z_T {:?}, known map {:?}, z_masked {:?}",
            s,
            known.shape(),
            z_masked.data().shape()
        )));
    }
    Ok(())
}

/// Denoises the whole clip as a single window. `reinject_from` is the
/// encoded original used for latent replacement; `None` disables it.
pub fn sample(
    z_t: &LatentClip,
    known: &KnownMap,
    z_masked: &LatentClip,
    denoiser: &dyn Denoiser,
    sched: &Schedule,
    reinject_from: Option<&LatentClip>,
) -> Result<LatentClip> {
    check_conditioning(z_t, known, z_masked)?;
    if let Some(orig) = reinject_from {
        if orig.data().shape() != z_t.data().shape() {
            return Err(Error::dims("reinjection source differs in shape"));
        }
    }
    let frames: Vec<usize> = (0..z_t.frames()).collect();
    let window = WindowInfo {
        frames: &frames,
        ordinal: 0,
    };
    let cond = Conditioning {
        known,
        z_masked: z_masked.data(),
        reinject: reinject_from.map(|o| (o.data(), z_t.data())),
    };
    let mut z = z_t.data().clone();
    for k in 0..sched.inference_steps() {
        step_window(&mut z, window, &cond, denoiser, sched, k)?;
    }
    LatentClip::new(z, z_t.fps())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 2.0,
            alpha: 3.0,
        }
    }
}

/// Region-normalised weighted L1 between predicted and true `v`. Each
/// region's mean divides by its total soft weight over all channels; an
/// empty region contributes 0.
pub fn latent_loss(v_hat: &Array4<f64>, v_true: &Array4<f64>, known: &KnownMap, weights: &LossWeights) -> Result<f64> {
    let s = v_hat.shape();
    if v_true.shape() != s || known.shape() != [s[0], s[2], s[3]] {
        return Err(Error::dims("latent loss operands differ in shape"));
    }
    let (mut known_sum, mut known_w, mut hole_sum, mut hole_w) = (0.0, 0.0, 0.0, 0.0);
    for ((f, c, y, x), &p) in v_hat.indexed_iter() {
        let d = (p - v_true[[f, c, y, x]]).abs();
        let m = known[[f, y, x]];
        known_sum += d * m;
        known_w += m;
        hole_sum += d * (1.0 - m);
        hole_w += 1.0 - m;
    }
    let region = |sum: f64, w: f64| if w > 0.0 { sum / w } else { 0.0 };
    Ok(weights.w1 * region(known_sum, known_w) + weights.w2 * region(hole_sum, hole_w))
}

/// Mean absolute pixel error between `x` and the decoded latent.
pub fn pixel_loss(x: &VideoClip, z0: &LatentClip) -> Result<f64> {
    let y = decode(z0)?;
    if y.len() != x.len() || y.height() != x.height() || y.width() != x.width() || y.channels() != x.channels() {
        return Err(Error::dims("decoded latent does not match the clip"));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in x.frames().iter().zip(y.frames()) {
        for (p, q) in a.data().iter().zip(b.data()) {
            sum += (p - q).abs();
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

pub fn total_loss(lr: f64, lpix: f64, weights: &LossWeights) -> f64 {
    lr + weights.alpha * lpix
}
