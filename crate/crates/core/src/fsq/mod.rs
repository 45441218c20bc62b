//! Finite scalar quantization: bounded rounding of a low-rank projection,
//! mixed-radix token ids and a small trainable mel tokenizer.

mod tokenizer;

pub use tokenizer::{forward, init_params, reconstruction_loss, Tokenizer, TokenizerConfig, TokenizerMeta, TokenizerPass};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};

/// Semantic tokens per second.
pub const TOKEN_RATE_HZ: u32 = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsqConfig {
    /// Latent dimensions after the down-projection.
    pub d: usize,
    /// Per-dimension bound; digits lie in `[-k, k]`.
    pub k: i32,
    /// Encoder width feeding the projection.
    pub hidden: usize,
}

impl Default for FsqConfig {
    fn default() -> Self {
        Self { d: 8, k: 1, hidden: 64 }
    }
}

impl FsqConfig {
    pub fn levels(&self) -> u32 {
        (2 * self.k + 1) as u32
    }

    pub fn codebook_size(&self) -> u32 {
        self.levels().pow(self.d as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodeVector {
    pub digits: Vec<i32>,
}

impl CodeVector {
    pub fn validate(&self, cfg: &FsqConfig) -> Result<()> {
        if self.digits.len() != cfg.d {
            return Err(Error::shape(
                "code_vector",
                format!("{} digits, config has D={}", self.digits.len(), cfg.d),
            ));
        }
        if let Some(d) = self.digits.iter().find(|d| d.abs() > cfg.k) {
            return Err(Error::Range(format!("digit {d} outside [-{0}, {0}]", cfg.k)));
        }
        Ok(())
    }
}

/// `sum_j (digit_j + K) * (2K+1)^j`.
pub fn token_index(c: &CodeVector, cfg: &FsqConfig) -> Result<u32> {
    c.validate(cfg)?;
    let base = cfg.levels();
    Ok(c
        .digits
        .iter()
        .rev()
        .fold(0u32, |acc, &d| acc * base + (d + cfg.k) as u32))
}

pub fn index_to_code(id: u32, cfg: &FsqConfig) -> Result<CodeVector> {
    if id >= cfg.codebook_size() {
        return Err(Error::Range(format!(
            "token id {id} outside [0, {})",
            cfg.codebook_size()
        )));
    }
    let base = cfg.levels();
    let mut rest = id;
    let digits = (0..cfg.d)
        .map(|_| {
            let d = (rest % base) as i32 - cfg.k;
            rest /= base;
            d
        })
        .collect();
    Ok(CodeVector { digits })
}

/// Rounds an already bounded value to its digit.
pub fn round_bounded(v: f64, k: i32) -> i32 {
    (v.round() as i32).clamp(-k, k)
}

/// `ROUND(K * tanh(z))` with a straight-through gradient.
pub fn bound_and_round<T: Real>(g: &mut Graph<T>, z: Var, k: i32) -> Var {
    let t = g.tanh(z);
    let b = g.scale(t, k as f64);
    g.round_st(b)
}

/// Down-projects one latent frame (`1 x hidden`) and rounds it, using the
/// `{prefix}.down` linear in `params`.
pub fn fsq_quantize<T: Real>(h: &[T], params: &ParamStore<T>, prefix: &str, cfg: &FsqConfig) -> Result<CodeVector> {
    let w = params.require(&format!("{prefix}.down.weight"))?;
    let b = params.require(&format!("{prefix}.down.bias"))?;
    if h.len() != w.rows() || w.cols() != cfg.d {
        return Err(Error::shape(
            "fsq_quantize",
            format!("latent of {} vs projection {:?}", h.len(), w.dims()),
        ));
    }
    let digits = (0..cfg.d)
        .map(|j| {
            let z: f64 = b.get(0, j).f64() + h.iter().enumerate().map(|(i, x)| x.f64() * w.get(i, j).f64()).sum::<f64>();
            round_bounded(cfg.k as f64 * z.tanh(), cfg.k)
        })
        .collect();
    Ok(CodeVector { digits })
}

/// Up-projects digits through `{prefix}.up`.
pub fn fsq_dequantize<T: Real>(c: &CodeVector, params: &ParamStore<T>, prefix: &str, cfg: &FsqConfig) -> Result<Tensor<T>> {
    c.validate(cfg)?;
    let w = params.require(&format!("{prefix}.up.weight"))?;
    let b = params.require(&format!("{prefix}.up.bias"))?;
    if w.rows() != cfg.d {
        return Err(Error::shape("fsq_dequantize", format!("projection {:?} for D={}", w.dims(), cfg.d)));
    }
    Ok(Tensor::from_fn(1, w.cols(), |_, j| {
        b.get(0, j) + c.digits.iter().enumerate().map(|(i, &d)| T::of(d as f64) * w.get(i, j)).sum::<T>()
    }))
}

/// Token ids at the semantic token rate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub rate_hz: u32,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        Self { ids, rate_hz: TOKEN_RATE_HZ }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
    }

    pub fn from_line(line: &str) -> std::result::Result<Self, String> {
        line.split_whitespace()
            .map(|t| t.parse::<u32>().map_err(|e| format!("bad token `{t}`: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Self::new)
    }
}

/// One utterance per line, space-separated decimal ids.
pub fn write_token_file(path: impl AsRef<Path>, seqs: &[TokenSequence]) -> Result<()> {
    let mut s = String::new();
    for seq in seqs {
        s.push_str(&seq.to_line());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_token_file(path: impl AsRef<Path>) -> Result<Vec<TokenSequence>> {
    let path = path.as_ref();
    std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .map(|(i, l)| {
            TokenSequence::from_line(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn index_corners() {
        let cfg = FsqConfig::default();
        assert_eq!(cfg.codebook_size(), 6561);
        let code = |v| CodeVector { digits: vec![v; 8] };
        assert_eq!(token_index(&code(-1), &cfg).unwrap(), 0);
        assert_eq!(token_index(&code(1), &cfg).unwrap(), 6560);
        assert_eq!(token_index(&code(0), &cfg).unwrap(), 3280);
        assert_eq!(index_to_code(3280, &cfg).unwrap(), code(0));
        assert_eq!(index_to_code(0, &cfg).unwrap(), code(-1));
        assert!(matches!(index_to_code(6561, &cfg), Err(Error::Range(_))));
    }

    #[test]
    fn exhaustive_bijection() {
        let cfg = FsqConfig::default();
        for id in 0..cfg.codebook_size() {
            assert_eq!(token_index(&index_to_code(id, &cfg).unwrap(), &cfg).unwrap(), id);
        }
    }

    #[test]
    fn rounding_boundary() {
        assert_eq!(round_bounded(0.49, 1), 0);
        assert_eq!(round_bounded(0.51, 1), 1);
        assert_eq!(round_bounded(-0.51, 1), -1);
        // Pre-round value K*tanh(z) constructed to land on either side.
        let mut p = ParamStore::<f64>::new();
        p.insert("q.down.weight", Tensor::identity(8));
        p.insert("q.down.bias", Tensor::zeros(&[1, 8]));
        let cfg = FsqConfig { d: 8, k: 1, hidden: 8 };
        let mut h = vec![0.0; 8];
        h[0] = 0.49f64.atanh();
        h[1] = 0.51f64.atanh();
        assert_eq!(fsq_quantize(&h, &p, "q", &cfg).unwrap().digits, vec![0, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn zero_latent_zero_projection() {
        let cfg = FsqConfig { d: 8, k: 1, hidden: 16 };
        let mut p = ParamStore::<f64>::new();
        p.insert("q.down.weight", Tensor::zeros(&[16, 8]));
        p.insert("q.down.bias", Tensor::zeros(&[1, 8]));
        assert_eq!(fsq_quantize(&[0.0; 16], &p, "q", &cfg).unwrap().digits, vec![0; 8]);
    }

    #[test]
    fn random_latents_stay_bounded() {
        let cfg = FsqConfig { d: 8, k: 2, hidden: 16 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamStore::<f64>::new();
        p.init_linear("q.down", 16, 8, 4.0, &mut rng);
        for _ in 0..10_000 {
            let h = Tensor::<f64>::randn(&[16], 3.0, &mut rng);
            let c = fsq_quantize(h.data(), &p, "q", &cfg).unwrap();
            assert!(c.digits.iter().all(|d| d.abs() <= cfg.k));
        }
    }

    #[test]
    fn dequantize_rules() {
        let cfg = FsqConfig { d: 8, k: 1, hidden: 8 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamStore::<f64>::new();
        p.init_linear("q.up", 8, 8, 1.0, &mut rng);
        p.insert("q.up.bias", Tensor::randn(&[1, 8], 1.0, &mut rng));
        let zero = CodeVector { digits: vec![0; 8] };
        assert_eq!(&fsq_dequantize(&zero, &p, "q", &cfg).unwrap(), p.get("q.up.bias").unwrap());

        p.insert("q.up.bias", Tensor::zeros(&[1, 8]));
        let a = CodeVector { digits: vec![1, 0, -1, 0, 1, 0, 0, 0] };
        let b = CodeVector { digits: vec![-1, 0, 0, 1, 0, 0, 0, 1] };
        let sum = CodeVector { digits: a.digits.iter().zip(&b.digits).map(|(x, y)| x + y).collect() };
        let lhs = fsq_dequantize(&sum, &p, "q", &cfg).unwrap();
        let rhs = fsq_dequantize(&a, &p, "q", &cfg).unwrap().zip_map(&fsq_dequantize(&b, &p, "q", &cfg).unwrap(), |x, y| x + y).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);

        p.insert("q.up.weight", Tensor::identity(8));
        let out = fsq_dequantize(&a, &p, "q", &cfg).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_through_matches_identity() {
        // Linear probe on the bounded value: the gradient reaching z must be
        // the same whether or not ROUND sits in between.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let z = Tensor::<f64>::randn(&[3, 8], 1.0, &mut rng);
        let probe = Tensor::<f64>::randn(&[3, 8], 1.0, &mut rng);
        let grad = |round: bool| {
            let mut g = Graph::<f64>::new();
            let zv = g.leaf(z.clone());
            let t = g.tanh(zv);
            let b = g.scale(t, 1.0);
            let q = if round { g.round_st(b) } else { b };
            let pv = g.constant(probe.clone());
            let m = g.mul(q, pv).unwrap();
            let l = g.sum_all(m);
            g.backward(l).unwrap().get(zv).unwrap().clone()
        };
        assert_eq!(grad(true), grad(false));
    }

    proptest! {
        #[test]
        fn rounded_vectors_are_fixed_points(digits in proptest::collection::vec(-2i32..=2, 8)) {
            for &d in &digits {
                prop_assert_eq!(round_bounded(d as f64, 2), d);
            }
        }

        #[test]
        fn token_line_round_trip(ids in proptest::collection::vec(0u32..6561, 0..40)) {
            let seq = TokenSequence::new(ids);
            prop_assert_eq!(TokenSequence::from_line(&seq.to_line()).unwrap(), seq);
        }
    }
}
