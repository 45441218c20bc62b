use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConditionBundle, ContentFeatures, SpeakerEmbedding, D_FEAT};
use crate::error::{Error, Result};
use crate::numerics::kernels::sinusoidal_table;
use crate::numerics::nn::{feed_forward, init_attention, init_feed_forward, layer_norm, linear, multi_head_attention, AttentionSpec};
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};

pub const N_QUERIES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QFormerConfig {
    pub d_feat: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_hidden: usize,
}

impl Default for QFormerConfig {
    fn default() -> Self {
        Self {
            d_feat: D_FEAT,
            d_model: 128,
            heads: 4,
            ff_hidden: 256,
        }
    }
}

impl QFormerConfig {
    fn spec(&self) -> AttentionSpec {
        AttentionSpec {
            d_model: self.d_model,
            heads: self.heads,
        }
    }
}

/// Parameters under `{prefix}.*`.
pub fn init_qformer<T: Real, R: Rng + ?Sized>(p: &mut ParamStore<T>, prefix: &str, cfg: &QFormerConfig, rng: &mut R) {
    let d = cfg.d_model;
    p.insert(format!("{prefix}.queries"), Tensor::randn(&[N_QUERIES, d], 1.0, rng));
    p.init_linear(&format!("{prefix}.in"), cfg.d_feat, d, 1.0, rng);
    init_attention(p, &format!("{prefix}.cross"), cfg.spec(), d, rng);
    p.init_layer_norm(&format!("{prefix}.ln_cross"), d);
    init_attention(p, &format!("{prefix}.self"), cfg.spec(), d, rng);
    p.init_layer_norm(&format!("{prefix}.ln_self"), d);
    p.init_linear(&format!("{prefix}.conv"), 3 * d, d, 0.5, rng);
    p.init_layer_norm(&format!("{prefix}.ln_conv"), d);
    init_feed_forward(p, &format!("{prefix}.ff"), d, cfg.ff_hidden, rng);
    p.init_layer_norm(&format!("{prefix}.ln_ff"), d);
    p.init_linear(&format!("{prefix}.out"), d, d, 1.0, rng);
}

/// Learned queries cross-attend to the features (sinusoidal positions on
/// the keys), then one Conformer-lite block: self-attention, a width-3
/// framed linear standing in for the convolution, and a feed-forward, each
/// residual and post-normalized. Returns `N_QUERIES x d_model`.
pub fn qformer_forward<T: Real>(
    g: &mut Graph<T>,
    p: &ParamStore<T>,
    prefix: &str,
    cfg: &QFormerConfig,
    feats: Var,
) -> Result<Var> {
    let (frames, width) = (g.value(feats).rows(), g.value(feats).cols());
    if width != cfg.d_feat {
        return Err(Error::shape("qformer", format!("features of width {width}, expected {}", cfg.d_feat)));
    }
    let name = |s: &str| format!("{prefix}.{s}");
    let kv = linear(g, p, &name("in"), feats)?;
    let pe = g.constant(sinusoidal_table(frames, cfg.d_model));
    let q = g.param(p, &name("queries"))?;
    let a = multi_head_attention(g, p, &name("cross"), cfg.spec(), q, kv, Some(pe), false)?;
    let x = g.add(q, a)?;
    let x = layer_norm(g, p, &name("ln_cross"), x)?;

    let a = multi_head_attention(g, p, &name("self"), cfg.spec(), x, x, None, false)?;
    let x = g.add(x, a)?;
    let x = layer_norm(g, p, &name("ln_self"), x)?;

    let prev = g.shift_rows(x, -1);
    let next = g.shift_rows(x, 1);
    let framed = g.concat_cols(&[prev, x, next])?;
    let c = linear(g, p, &name("conv"), framed)?;
    let c = g.gelu(c);
    let x = g.add(x, c)?;
    let x = layer_norm(g, p, &name("ln_conv"), x)?;

    let f = feed_forward(g, p, &name("ff"), x)?;
    let x = g.add(x, f)?;
    let x = layer_norm(g, p, &name("ln_ff"), x)?;
    linear(g, p, &name("out"), x)
}

/// Inference-only condition bundle from content features and a speaker
/// embedding.
pub fn qformer_condition(
    f: &ContentFeatures,
    s: &SpeakerEmbedding,
    p: &ParamStore<f32>,
    prefix: &str,
    cfg: &QFormerConfig,
) -> Result<ConditionBundle> {
    if f.frames() == 0 {
        return Err(Error::EmptyInput("no content frames".into()));
    }
    let mut g = Graph::new();
    let x = g.constant(f.0.clone());
    let c = qformer_forward(&mut g, p, prefix, cfg, x)?;
    Ok(ConditionBundle {
        s: s.clone(),
        c: g.value(c).clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> QFormerConfig {
        QFormerConfig {
            d_feat: D_FEAT,
            d_model: 32,
            heads: 4,
            ff_hidden: 64,
        }
    }

    #[test]
    fn output_count_is_length_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamStore::<f32>::new();
        init_qformer(&mut p, "qf", &small(), &mut rng);
        let s = SpeakerEmbedding(vec![0.125; 64]);
        for frames in [10, 100, 500] {
            let f = ContentFeatures(Tensor::randn(&[frames, D_FEAT], 0.5, &mut rng));
            let b = qformer_condition(&f, &s, &p, "qf", &small()).unwrap();
            assert_eq!(b.c.dims(), &[N_QUERIES, 32]);
        }
    }

    #[test]
    fn frame_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamStore::<f32>::new();
        init_qformer(&mut p, "qf", &small(), &mut rng);
        let f = Tensor::<f32>::randn(&[20, D_FEAT], 0.5, &mut rng);
        let rows: Vec<Vec<f32>> = (0..20).rev().map(|i| f.row(i).to_vec()).collect();
        let r = Tensor::from_rows(&rows).unwrap();
        let s = SpeakerEmbedding(vec![0.125; 64]);
        let a = qformer_condition(&ContentFeatures(f), &s, &p, "qf", &small()).unwrap();
        let b = qformer_condition(&ContentFeatures(r), &s, &p, "qf", &small()).unwrap();
        assert!(a.c.max_abs_diff(&b.c) > 1e-4);
    }
}
