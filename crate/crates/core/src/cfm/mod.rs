//! Mel decoder: conditional flow matching along the optimal-transport
//! path, a DiT-lite velocity network and a fixed-step Euler sampler.

mod dit;

pub use dit::{build_condition_frames, dit_block, dit_forward, init_params, time_embedding, DitConfig, DitLite, DitMeta};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::{MelSpectrogram, MEL_FRAMES_PER_TOKEN};
use crate::conditioner::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::fsq::TokenSequence;
use crate::numerics::checkpoint::{read_file, write_file};
use crate::numerics::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPathConfig {
    pub sigma_min: f64,
    pub steps: usize,
}

impl Default for FlowPathConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1e-4,
            steps: 10,
        }
    }
}

impl FlowPathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma_min) {
            return Err(Error::Range(format!("sigma_min {} outside [0, 1)", self.sigma_min)));
        }
        if self.steps == 0 {
            return Err(Error::Range("at least one Euler step is required".into()));
        }
        Ok(())
    }
}

/// Decoder inputs: reference mel, speaker vector and the target's
/// semantic tokens (four mel frames per token).
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderCondition {
    pub m_ref: MelSpectrogram,
    pub s: SpeakerEmbedding,
    pub tgt_tokens: TokenSequence,
}

impl DecoderCondition {
    pub fn frames(&self) -> usize {
        self.tgt_tokens.len() * MEL_FRAMES_PER_TOKEN
    }

    pub fn check_alignment(&self, frames: usize) -> Result<()> {
        if self.tgt_tokens.is_empty() {
            return Err(Error::EmptyInput("decoder condition has no tokens".into()));
        }
        if self.frames() != frames {
            return Err(Error::shape(
                "decoder condition",
                format!("{} tokens need {} frames, got {frames}", self.tgt_tokens.len(), self.frames()),
            ));
        }
        Ok(())
    }
}

/// Point and target velocity on the conditional OT path:
/// `x_t = (1 - (1 - sigma_min) t) x0 + t x1`, `u_t = x1 - (1 - sigma_min) x0`.
pub fn ot_path<T: Real>(x0: &Tensor<T>, x1: &Tensor<T>, t: f64, cfg: &FlowPathConfig) -> Result<(Tensor<T>, Tensor<T>)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Range(format!("flow time {t} outside [0, 1]")));
    }
    let a = T::of(1.0 - cfg.sigma_min);
    let (c0, tt) = (T::of(1.0 - (1.0 - cfg.sigma_min) * t), T::of(t));
    let xt = x0.zip_map(x1, |u, v| c0 * u + tt * v)?;
    let ut = x0.zip_map(x1, |u, v| v - a * u)?;
    Ok((xt, ut))
}

/// Anything that predicts a velocity for a noisy mel at flow time `t`.
pub trait VelocityField {
    fn velocity(&self, x: &Tensor<f32>, t: f64, cond: &DecoderCondition) -> Result<Tensor<f32>>;
}

/// Test stub returning the true conditional field towards a known `x1`.
/// Along the path it equals `u_t` whatever `x0` was.
#[derive(Clone, Debug)]
pub struct ExactField {
    pub x1: Tensor<f64>,
    pub sigma_min: f64,
}

impl ExactField {
    pub fn velocity64(&self, x: &Tensor<f64>, t: f64) -> Result<Tensor<f64>> {
        let a = 1.0 - self.sigma_min;
        let denom = 1.0 - a * t;
        x.zip_map(&self.x1, |xv, x1| (x1 - a * xv) / denom)
    }
}

impl VelocityField for ExactField {
    fn velocity(&self, x: &Tensor<f32>, t: f64, _cond: &DecoderCondition) -> Result<Tensor<f32>> {
        Ok(self.velocity64(&x.cast(), t)?.cast())
    }
}

/// Always predicts zero.
pub struct ZeroField;

impl VelocityField for ZeroField {
    fn velocity(&self, x: &Tensor<f32>, _t: f64, _cond: &DecoderCondition) -> Result<Tensor<f32>> {
        Ok(Tensor::zeros(x.dims()))
    }
}

/// Draws `(t, x0)` for one loss evaluation.
pub fn draw_path_sample<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> (f64, Tensor<f32>) {
    let t: f64 = rng.random();
    (t, Tensor::randn(dims, 1.0, rng))
}

/// Standard-normal start for sampling, `frames x bins`.
pub fn initial_noise<T: Real>(frames: usize, bins: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(frames, bins, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// Mean squared velocity error at one drawn `(t, x0)`. `x1` is the
/// normalized target mel.
pub fn cfm_loss<F: VelocityField, R: Rng + ?Sized>(
    field: &F,
    cond: &DecoderCondition,
    x1: &Tensor<f32>,
    cfg: &FlowPathConfig,
    rng: &mut R,
) -> Result<f64> {
    cond.check_alignment(x1.rows())?;
    let (t, x0) = draw_path_sample(x1.dims(), rng);
    let (xt, ut) = ot_path(&x0, x1, t, cfg)?;
    let v = field.velocity(&xt, t, cond)?;
    let d = v.zip_map(&ut, |a, b| a - b)?;
    Ok(d.data().iter().map(|&e| (e as f64) * (e as f64)).sum::<f64>() / d.len() as f64)
}

/// `x <- x + v(x, k / steps) / steps` from seeded Gaussian noise; returns
/// the final state as a normalized mel tensor.
pub fn euler_integrate<F: VelocityField>(
    field: &F,
    cond: &DecoderCondition,
    x0: Tensor<f32>,
    cfg: &FlowPathConfig,
) -> Result<Tensor<f32>> {
    cfg.validate()?;
    let dt = 1.0 / cfg.steps as f64;
    let mut x = x0;
    for k in 0..cfg.steps {
        let v = field.velocity(&x, k as f64 * dt, cond)?;
        x = x.zip_map(&v, |a, b| a + (dt as f32) * b)?;
    }
    Ok(x)
}

pub fn euler_sample<F: VelocityField>(
    field: &F,
    cond: &DecoderCondition,
    frames: usize,
    cfg: &FlowPathConfig,
    seed: u64,
) -> Result<MelSpectrogram> {
    cond.check_alignment(frames)?;
    let x0 = initial_noise(frames, cond.m_ref.bins, seed);
    let x = euler_integrate(field, cond, x0, cfg)?;
    MelSpectrogram::from_normalized(&x)
}

/// Same integration in 64-bit for the exact-field oracle.
pub fn euler_exact(field: &ExactField, x0: &Tensor<f64>, steps: usize) -> Result<Tensor<f64>> {
    let dt = 1.0 / steps as f64;
    let mut x = x0.clone();
    for k in 0..steps {
        let v = field.velocity64(&x, k as f64 * dt)?;
        x = x.zip_map(&v, |a, b| a + dt * b)?;
    }
    Ok(x)
}

/// Mel as a single `mel` tensor in the checkpoint format.
pub fn write_mel_tensor(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_file(path, &[("mel", &mel.to_tensor())])
}

pub fn read_mel_tensor(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let tensors = read_file(path.as_ref())?;
    let (_, t) = tensors
        .into_iter()
        .find(|(n, _)| n == "mel")
        .ok_or_else(|| Error::Checkpoint("no `mel` tensor in file".into()))?;
    MelSpectrogram::from_tensor(&t)
}
