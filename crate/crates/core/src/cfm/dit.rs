use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{draw_path_sample, ot_path, DecoderCondition, FlowPathConfig, VelocityField};
use crate::ar::schedule;
use crate::artifact;
use crate::audio::MEL_FRAMES_PER_TOKEN;
use crate::conditioner::D_SPK;
use crate::error::{Error, Result};
use crate::numerics::kernels::{sinusoidal_scalar, sinusoidal_table};
use crate::numerics::nn::{feed_forward, init_attention, init_feed_forward, linear, multi_head_attention, plain_norm, AttentionSpec};
use crate::numerics::{Adam, AdamConfig, Graph, ParamStore, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DitConfig {
    pub d_model: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub n_mels: usize,
    /// Width of the learned semantic-token embedding.
    pub d_tok: usize,
    /// Multiplier on `t` before the sinusoidal time embedding.
    pub time_scale: f64,
    pub codebook: usize,
    pub lr: f64,
    pub warmup: usize,
}

impl Default for DitConfig {
    fn default() -> Self {
        Self::with_dims(128, 4, 4)
    }
}

impl DitConfig {
    pub fn with_dims(d_model: usize, heads: usize, blocks: usize) -> Self {
        Self {
            d_model,
            blocks,
            heads,
            ff_hidden: 2 * d_model,
            n_mels: 80,
            d_tok: 64,
            time_scale: 100.0,
            codebook: 6561,
            lr: 1e-3,
            warmup: 50,
        }
    }

    fn spec(&self) -> AttentionSpec {
        AttentionSpec {
            d_model: self.d_model,
            heads: self.heads,
        }
    }
}

pub fn init_params<T: Real>(cfg: &DitConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let mut p = ParamStore::new();
    p.insert("tok_emb", Tensor::randn(&[cfg.codebook, cfg.d_tok], 1.0, &mut rng));
    p.init_linear("cond.proj", cfg.d_tok + D_SPK + cfg.n_mels, d, 1.0, &mut rng);
    p.init_linear("in.proj", cfg.n_mels, d, 1.0, &mut rng);
    p.init_linear("time.l1", d, d, 1.0, &mut rng);
    p.init_linear("time.l2", d, d, 1.0, &mut rng);
    for b in 0..cfg.blocks {
        // Zero modulation: every block starts as a plain pre-norm block.
        p.insert(format!("blk{b}.ada.weight"), Tensor::zeros(&[d, 4 * d]));
        p.insert(format!("blk{b}.ada.bias"), Tensor::zeros(&[1, 4 * d]));
        init_attention(&mut p, &format!("blk{b}.attn"), cfg.spec(), d, &mut rng);
        init_feed_forward(&mut p, &format!("blk{b}.ff"), d, cfg.ff_hidden, &mut rng);
    }
    p.insert("final.ada.weight", Tensor::zeros(&[d, 2 * d]));
    p.insert("final.ada.bias", Tensor::zeros(&[1, 2 * d]));
    p.init_linear("out", d, cfg.n_mels, 0.1, &mut rng);
    // Per-bin, time-dependent gain on the noisy input added to the output.
    p.insert("skip.weight", Tensor::zeros(&[d, cfg.n_mels]));
    p.insert("skip.bias", Tensor::zeros(&[1, cfg.n_mels]));
    p
}

/// Token embeddings repeated to 100 fps, joined per frame with the
/// broadcast speaker vector and the mean reference mel, projected to
/// `frames x d_model`.
pub fn build_condition_frames<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cond: &DecoderCondition) -> Result<Var> {
    if cond.tgt_tokens.is_empty() {
        return Err(Error::EmptyInput("decoder condition has no tokens".into()));
    }
    let frames = cond.frames();
    let ids: Vec<usize> = cond
        .tgt_tokens
        .ids
        .iter()
        .flat_map(|&t| std::iter::repeat_n(t as usize, MEL_FRAMES_PER_TOKEN))
        .collect();
    let table = g.param(p, "tok_emb")?;
    let tok = g.gather_rows(table, &ids)?;
    let s: Vec<T> = cond.s.0.iter().map(|&v| T::of(v as f64)).collect();
    let s = g.constant(Tensor::from_fn(frames, s.len(), |_, j| s[j]));
    let m = cond.m_ref.normalized();
    let pooled: Vec<T> = (0..m.cols())
        .map(|j| T::of((0..m.rows()).map(|i| m.get(i, j) as f64).sum::<f64>() / m.rows() as f64))
        .collect();
    let pooled = g.constant(Tensor::from_fn(frames, pooled.len(), |_, j| pooled[j]));
    let joined = g.concat_cols(&[tok, s, pooled])?;
    linear(g, p, "cond.proj", joined)
}

/// Activated time embedding, `1 x d_model`.
pub fn time_embedding<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &DitConfig, t: f64) -> Result<Var> {
    let e = g.constant(sinusoidal_scalar(t, cfg.d_model, cfg.time_scale));
    let e = linear(g, p, "time.l1", e)?;
    let e = g.gelu(e);
    let e = linear(g, p, "time.l2", e)?;
    Ok(g.gelu(e))
}

fn modulate<T: Real>(g: &mut Graph<T>, x: Var, shift: Var, scale: Var) -> Result<Var> {
    let n = plain_norm(g, x)?;
    let width = g.value(scale).cols();
    let ones = g.constant(Tensor::ones(&[1, width]));
    let scale = g.add(scale, ones)?;
    let n = g.mul_row(n, scale)?;
    g.add_row(n, shift)
}

/// Non-causal transformer block with time-modulated layer norms.
pub fn dit_block<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &DitConfig, prefix: &str, x: Var, temb: Var) -> Result<Var> {
    let d = cfg.d_model;
    let m = linear(g, p, &format!("{prefix}.ada"), temb)?;
    let (sh1, sc1) = (g.slice_cols(m, 0, d)?, g.slice_cols(m, d, d)?);
    let (sh2, sc2) = (g.slice_cols(m, 2 * d, d)?, g.slice_cols(m, 3 * d, d)?);
    let h = modulate(g, x, sh1, sc1)?;
    let a = multi_head_attention(g, p, &format!("{prefix}.attn"), cfg.spec(), h, h, None, false)?;
    let x = g.add(x, a)?;
    let h = modulate(g, x, sh2, sc2)?;
    let f = feed_forward(g, p, &format!("{prefix}.ff"), h)?;
    g.add(x, f)
}

/// Velocity for noisy mel `x` (`frames x n_mels`) at time `t`. The
/// output adds a time-gated copy of `x`, since the target field is linear
/// in `x` with a coefficient that grows as `t` approaches 1.
pub fn dit_forward<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &DitConfig, x: Var, t: f64, cond_frames: Var) -> Result<Var> {
    let (frames, d) = (g.value(x).rows(), cfg.d_model);
    if g.value(cond_frames).rows() != frames {
        return Err(Error::shape(
            "dit_forward",
            format!("{frames} mel frames vs {} condition frames", g.value(cond_frames).rows()),
        ));
    }
    let h = linear(g, p, "in.proj", x)?;
    let h = g.add(h, cond_frames)?;
    let pos = g.constant(sinusoidal_table(frames, d));
    let mut h = g.add(h, pos)?;
    let temb = time_embedding(g, p, cfg, t)?;
    for b in 0..cfg.blocks {
        h = dit_block(g, p, cfg, &format!("blk{b}"), h, temb)?;
    }
    let m = linear(g, p, "final.ada", temb)?;
    let (shift, scale) = (g.slice_cols(m, 0, d)?, g.slice_cols(m, d, d)?);
    let h = modulate(g, h, shift, scale)?;
    let main = linear(g, p, "out", h)?;
    let gain = linear(g, p, "skip", temb)?;
    let skip = g.mul_row(x, gain)?;
    g.add(main, skip)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DitMeta {
    pub kind: String,
    pub cfg: DitConfig,
    pub flow: FlowPathConfig,
    pub seed: u64,
    pub steps: u64,
}

#[derive(Clone, Debug)]
pub struct DitLite {
    pub cfg: DitConfig,
    pub flow: FlowPathConfig,
    pub params: ParamStore<f32>,
    pub seed: u64,
    pub steps: u64,
}

impl DitLite {
    pub fn new(cfg: DitConfig, flow: FlowPathConfig, seed: u64) -> Self {
        let params = init_params(&cfg, seed);
        Self {
            cfg,
            flow,
            params,
            seed,
            steps: 0,
        }
    }

    pub fn condition_frames(&self, cond: &DecoderCondition) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let c = build_condition_frames(&mut g, &self.params, cond)?;
        Ok(g.value(c).clone())
    }

    fn batch_loss(&self, g: &mut Graph<f32>, batch: &[(DecoderCondition, Tensor<f32>)], rng: &mut ChaCha8Rng) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty decoder batch".into()));
        }
        let mut loss = None;
        for (cond, x1) in batch {
            cond.check_alignment(x1.rows())?;
            let (t, x0) = draw_path_sample(x1.dims(), rng);
            let (xt, ut) = ot_path(&x0, x1, t, &self.flow)?;
            let c = build_condition_frames(g, &self.params, cond)?;
            let x = g.constant(xt);
            let v = dit_forward(g, &self.params, &self.cfg, x, t, c)?;
            let u = g.constant(ut);
            let l = g.mse(v, u)?;
            let l = g.scale(l, 1.0 / batch.len() as f64);
            loss = Some(match loss {
                None => l,
                Some(acc) => g.add(acc, l)?,
            });
        }
        Ok(loss.expect("non-empty batch"))
    }

    /// Loss over a fixed set of `(t, x0)` draws, for tracking progress.
    pub fn eval_loss(&self, batch: &[(DecoderCondition, Tensor<f32>)], seed: u64) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.batch_loss(&mut g, batch, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(g.value(l).item() as f64)
    }

    /// Adam on the flow-matching loss; each batch entry gets its own
    /// `(t, x0)` draw. Uses the same warmup and cosine schedule as the AR
    /// trainer.
    pub fn train(
        &mut self,
        steps: usize,
        batch: impl FnMut(usize) -> Result<Vec<(DecoderCondition, Tensor<f32>)>>,
        mut log: impl FnMut(usize, f64),
    ) -> Result<f64> {
        self.train_observed(steps, batch, |step, loss, _| log(step, loss))
    }

    /// Like [`DitLite::train`], with read access to the model after every update.
    pub fn train_observed(
        &mut self,
        steps: usize,
        mut batch: impl FnMut(usize) -> Result<Vec<(DecoderCondition, Tensor<f32>)>>,
        mut observe: impl FnMut(usize, f64, &Self),
    ) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xcf3);
        let mut opt = Adam::new(AdamConfig {
            lr: self.cfg.lr,
            ..AdamConfig::default()
        });
        let mut last = f64::NAN;
        for step in 0..steps {
            let items = batch(step)?;
            let mut g = Graph::new();
            let loss = self.batch_loss(&mut g, &items, &mut rng)?;
            last = g.value(loss).item() as f64;
            if !last.is_finite() {
                return Err(Error::NonFinite { op: "cfm loss" });
            }
            let grads = g.backward(loss)?;
            opt.step_with_lr(&mut self.params, &grads.named(), schedule(self.cfg.lr, self.cfg.warmup, steps, step));
            self.steps += 1;
            observe(step, last, self);
        }
        Ok(last)
    }

    pub fn meta(&self) -> DitMeta {
        DitMeta {
            kind: "cfm".into(),
            cfg: self.cfg.clone(),
            flow: self.flow.clone(),
            seed: self.seed,
            steps: self.steps,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        artifact::save(path, &self.params, &self.meta())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta): (_, DitMeta) = artifact::load(path, "cfm")?;
        Ok(Self {
            cfg: meta.cfg,
            flow: meta.flow,
            params,
            seed: meta.seed,
            steps: meta.steps,
        })
    }
}

impl VelocityField for DitLite {
    fn velocity(&self, x: &Tensor<f32>, t: f64, cond: &DecoderCondition) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let c = build_condition_frames(&mut g, &self.params, cond)?;
        let xv = g.constant(x.clone());
        let v = dit_forward(&mut g, &self.params, &self.cfg, xv, t, c)?;
        Ok(g.value(v).clone())
    }
}
