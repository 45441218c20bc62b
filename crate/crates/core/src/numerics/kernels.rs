//! Forward kernels over plain tensors. The autodiff graph calls these for its
//! forward values; inference code may call them directly.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

static PARALLEL_MATMUL: AtomicBool = AtomicBool::new(false);

/// Enables the rayon matmul path. Results may then differ in the last bit
/// between runs, so the deterministic default is off.
pub fn set_parallel_matmul(on: bool) {
    PARALLEL_MATMUL.store(on, Ordering::Relaxed);
}

pub fn parallel_matmul() -> bool {
    PARALLEL_MATMUL.load(Ordering::Relaxed)
}

fn check_finite<T: Real>(op: &'static str, xs: &[T]) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn matrix_dims<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    if t.rank() > 2 {
        return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.dims())));
    }
    Ok((t.rows(), t.cols()))
}

fn matmul_row<T: Real>(a_row: &[T], b: &[T], n: usize, out_row: &mut [T]) {
    for (p, &a) in a_row.iter().enumerate() {
        let b_row = &b[p * n..(p + 1) * n];
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o = *o + a * bv;
        }
    }
}

pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = matrix_dims("matmul", a)?;
    let (k2, n) = matrix_dims("matmul", b)?;
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("inner extents {k} vs {k2} ({:?} x {:?})", a.dims(), b.dims()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    if parallel_matmul() && m * k * n > 1 << 16 {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| matmul_row(&ad[i * k..(i + 1) * k], bd, n, row));
    } else {
        for (i, row) in out.chunks_mut(n).enumerate() {
            matmul_row(&ad[i * k..(i + 1) * k], bd, n, row);
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Row-wise softmax with max subtraction. With `causal`, entry `(i, j)` for
/// `j > i` is excluded and its output is exactly zero.
pub fn softmax_rows_masked<T: Real>(x: &Tensor<T>, causal: bool) -> Result<Tensor<T>> {
    check_finite("softmax_rows", x.data())?;
    let (m, n) = matrix_dims("softmax_rows", x)?;
    if causal && m > n {
        return Err(Error::shape("softmax_rows", format!("causal mask needs rows <= cols, got {m}x{n}")));
    }
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = x.row(i);
        let limit = if causal { i + 1 } else { n };
        let mx = row[..limit].iter().copied().fold(T::neg_infinity(), T::max);
        let o = &mut out[i * n..i * n + limit];
        let mut s = T::zero();
        for (oj, &v) in o.iter_mut().zip(&row[..limit]) {
            *oj = (v - mx).exp();
            s = s + *oj;
        }
        for oj in o.iter_mut() {
            *oj = *oj / s;
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    softmax_rows_masked(x, false)
}

pub fn log_softmax_rows<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    check_finite("log_softmax_rows", x.data())?;
    let (m, n) = matrix_dims("log_softmax_rows", x)?;
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = x.row(i);
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln() + mx;
        for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Normalized rows and per-row reciprocal standard deviation, before the
/// affine step.
pub(crate) fn normalize_rows<T: Real>(x: &Tensor<T>, eps: T) -> (Vec<T>, Vec<T>) {
    let (m, n) = (x.rows(), x.cols());
    let nf = T::of(n as f64);
    let mut xhat = vec![T::zero(); m * n];
    let mut rstd = vec![T::zero(); m];
    for i in 0..m {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() / nf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        for (o, &v) in xhat[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = (v - mean) * r;
        }
    }
    (xhat, rstd)
}

pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Contract("layer_norm eps must be positive".into()));
    }
    let (m, n) = matrix_dims("layer_norm", x)?;
    if gamma.len() != n || beta.len() != n {
        return Err(Error::shape(
            "layer_norm",
            format!("width {n}, gamma {}, beta {}", gamma.len(), beta.len()),
        ));
    }
    let (mut xhat, _) = normalize_rows(x, eps);
    for i in 0..m {
        for j in 0..n {
            let v = &mut xhat[i * n + j];
            *v = *v * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok(Tensor::from_parts(vec![m, n], xhat))
}

/// Single-head scaled dot-product attention.
pub fn attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    causal: bool,
) -> Result<Tensor<T>> {
    let d = q.cols();
    if k.cols() != d || v.rows() != k.rows() {
        return Err(Error::shape(
            "attention",
            format!("q {:?}, k {:?}, v {:?}", q.dims(), k.dims(), v.dims()),
        ));
    }
    if causal && q.rows() != k.rows() {
        return Err(Error::shape("attention", "causal attention needs T_q == T_k"));
    }
    let scale = T::one() / T::of(d as f64).sqrt();
    let scores = matmul(q, &k.transpose())?.map(|s| s * scale);
    let w = softmax_rows_masked(&scores, causal)?;
    matmul(&w, v)
}

pub fn gelu<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::of(0.044715) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of((2.0 / std::f64::consts::PI).sqrt());
    let inner = c * (x + T::of(0.044715) * x * x * x);
    let th = inner.tanh();
    let dinner = c * (T::one() + T::of(3.0 * 0.044715) * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * dinner
}

/// Sinusoidal encoding table, `len x dim`.
pub fn sinusoidal_table<T: Real>(len: usize, dim: usize) -> Tensor<T> {
    Tensor::from_fn(len, dim, |pos, i| {
        let pair = (i / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * pair / dim as f64);
        let a = pos as f64 * freq;
        T::of(if i % 2 == 0 { a.sin() } else { a.cos() })
    })
}

/// Sinusoidal embedding of a continuous scalar (flow time), `1 x dim`.
pub fn sinusoidal_scalar<T: Real>(t: f64, dim: usize, scale: f64) -> Tensor<T> {
    let half = dim / 2;
    Tensor::from_fn(1, dim, |_, i| {
        let k = (i % half.max(1)) as f64;
        let freq = (-(10000f64.ln()) * k / half.max(1) as f64).exp();
        let a = t * scale * freq;
        T::of(if i < half { a.sin() } else { a.cos() })
    })
}
