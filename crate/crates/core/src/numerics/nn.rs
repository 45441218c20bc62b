//! Layer building blocks recorded on a [`Graph`]. Weights live in a
//! [`ParamStore`] under dotted names (`block0.attn.q.weight`, ...).

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Real;
use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

pub fn linear<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(p, &format!("{prefix}.weight"))?;
    let b = g.param(p, &format!("{prefix}.bias"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

pub fn layer_norm<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let gamma = g.param(p, &format!("{prefix}.gamma"))?;
    let beta = g.param(p, &format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, LN_EPS)
}

/// Layer norm without affine parameters.
pub fn plain_norm<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let n = g.value(x).cols();
    let ones = g.constant(super::Tensor::ones(&[1, n]));
    let zeros = g.constant(super::Tensor::zeros(&[1, n]));
    g.layer_norm(x, ones, zeros, LN_EPS)
}

/// Scaled dot-product attention on graph nodes.
pub fn attention<T: Real>(g: &mut Graph<T>, q: Var, k: Var, v: Var, causal: bool) -> Result<Var> {
    let (tq, d) = (g.value(q).rows(), g.value(q).cols());
    let tk = g.value(k).rows();
    if g.value(k).cols() != d || g.value(v).rows() != tk {
        return Err(Error::shape("attention", "q/k/v extents disagree"));
    }
    if causal && tq != tk {
        return Err(Error::shape("attention", "causal attention needs T_q == T_k"));
    }
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let w = if causal {
        g.softmax_rows_causal(scores)?
    } else {
        g.softmax_rows(scores)?
    };
    g.matmul(w, v)
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionSpec {
    pub d_model: usize,
    pub heads: usize,
}

impl AttentionSpec {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

pub fn init_attention<T: Real, R: Rng + ?Sized>(
    p: &mut ParamStore<T>,
    prefix: &str,
    spec: AttentionSpec,
    kv_width: usize,
    rng: &mut R,
) {
    let d = spec.d_model;
    p.init_linear(&format!("{prefix}.q"), d, d, 1.0, rng);
    p.init_linear(&format!("{prefix}.k"), kv_width, d, 1.0, rng);
    p.init_linear(&format!("{prefix}.v"), kv_width, d, 1.0, rng);
    p.init_linear(&format!("{prefix}.o"), d, d, 0.5, rng);
}

/// Multi-head attention from `query_in` onto `kv_in`. `key_bias` (same shape
/// as the projected keys) is added to the keys only.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention<T: Real>(
    g: &mut Graph<T>,
    p: &ParamStore<T>,
    prefix: &str,
    spec: AttentionSpec,
    query_in: Var,
    kv_in: Var,
    key_bias: Option<Var>,
    causal: bool,
) -> Result<Var> {
    let q = linear(g, p, &format!("{prefix}.q"), query_in)?;
    let mut k = linear(g, p, &format!("{prefix}.k"), kv_in)?;
    if let Some(b) = key_bias {
        k = g.add(k, b)?;
    }
    let v = linear(g, p, &format!("{prefix}.v"), kv_in)?;
    let hd = spec.head_dim();
    let mut heads = Vec::with_capacity(spec.heads);
    for h in 0..spec.heads {
        let qh = g.slice_cols(q, h * hd, hd)?;
        let kh = g.slice_cols(k, h * hd, hd)?;
        let vh = g.slice_cols(v, h * hd, hd)?;
        heads.push(attention(g, qh, kh, vh, causal)?);
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)?
    };
    linear(g, p, &format!("{prefix}.o"), cat)
}

pub fn init_feed_forward<T: Real, R: Rng + ?Sized>(
    p: &mut ParamStore<T>,
    prefix: &str,
    d: usize,
    hidden: usize,
    rng: &mut R,
) {
    p.init_linear(&format!("{prefix}.up"), d, hidden, 1.0, rng);
    p.init_linear(&format!("{prefix}.down"), hidden, d, 0.5, rng);
}

pub fn feed_forward<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var> {
    let h = linear(g, p, &format!("{prefix}.up"), x)?;
    let h = g.gelu(h);
    linear(g, p, &format!("{prefix}.down"), h)
}
