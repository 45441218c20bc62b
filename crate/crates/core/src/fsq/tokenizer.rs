use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{index_to_code, token_index, CodeVector, FsqConfig, TokenSequence};
use crate::artifact;
use crate::audio::{mel_spectrogram, MelConfig, MelSpectrogram, Waveform, MEL_FRAMES_PER_TOKEN};
use crate::error::{Error, Result};
use crate::numerics::nn::linear;
use crate::numerics::{Adam, AdamConfig, Graph, ParamStore, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub fsq: FsqConfig,
    pub n_mels: usize,
    /// Longest training crop in mel frames.
    pub max_train_frames: usize,
    pub lr: f64,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            fsq: FsqConfig::default(),
            n_mels: 80,
            max_train_frames: 200,
            lr: 3e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerMeta {
    pub kind: String,
    pub cfg: TokenizerConfig,
    pub seed: u64,
    pub steps: u64,
}

/// Graph nodes of one tokenizer pass.
pub struct TokenizerPass {
    /// `K * tanh(z)`, `tokens x D`.
    pub bounded: Var,
    /// Straight-through rounded digits.
    pub digits: Var,
    /// Reconstructed normalized mel, `4 * tokens x n_mels`.
    pub recon: Var,
    pub target: Var,
}

/// Two framed linear layers (stride 2 each, so stride 4 overall) feed
/// the FSQ bottleneck; a mirrored decoder reconstructs the mel frames.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    pub cfg: TokenizerConfig,
    pub params: ParamStore<f32>,
    pub seed: u64,
    pub steps: u64,
}

pub fn init_params<T: Real>(cfg: &TokenizerConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.fsq.hidden;
    let mut p = ParamStore::new();
    p.init_linear("enc.l1", 2 * cfg.n_mels, h, 1.0, &mut rng);
    p.init_linear("enc.l2", 2 * h, h, 1.0, &mut rng);
    p.init_linear("fsq.down", h, cfg.fsq.d, 2.0, &mut rng);
    p.init_linear("fsq.up", cfg.fsq.d, h, 1.0, &mut rng);
    p.init_linear("dec.l1", h, h, 1.0, &mut rng);
    p.init_linear("dec.out", h, MEL_FRAMES_PER_TOKEN * cfg.n_mels, 1.0, &mut rng);
    p
}

/// Records the encoder/quantizer/decoder on `g` for a normalized mel.
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    p: &ParamStore<T>,
    cfg: &TokenizerConfig,
    mel_norm: &Tensor<T>,
) -> Result<TokenizerPass> {
    let (frames, bins) = (mel_norm.rows(), mel_norm.cols());
    if bins != cfg.n_mels {
        return Err(Error::shape("tokenizer", format!("{bins} mel bins, expected {}", cfg.n_mels)));
    }
    let n_tok = frames / MEL_FRAMES_PER_TOKEN;
    if n_tok == 0 {
        return Err(Error::EmptyInput(format!(
            "{frames} mel frames is less than one 40 ms token"
        )));
    }
    let used = n_tok * MEL_FRAMES_PER_TOKEN;
    let h = cfg.fsq.hidden;
    let target = g.constant(mel_norm.slice_rows(0, used)?);
    let x = g.reshape(target, &[used / 2, 2 * bins])?;
    let x = linear(g, p, "enc.l1", x)?;
    let x = g.gelu(x);
    let x = g.reshape(x, &[n_tok, 2 * h])?;
    let x = linear(g, p, "enc.l2", x)?;
    let x = g.gelu(x);
    let z = linear(g, p, "fsq.down", x)?;
    let t = g.tanh(z);
    let bounded = g.scale(t, cfg.fsq.k as f64);
    let digits = g.round_st(bounded);
    let u = linear(g, p, "fsq.up", digits)?;
    let u = linear(g, p, "dec.l1", u)?;
    let u = g.gelu(u);
    let out = linear(g, p, "dec.out", u)?;
    let recon = g.reshape(out, &[used, bins])?;
    Ok(TokenizerPass {
        bounded,
        digits,
        recon,
        target,
    })
}

pub fn reconstruction_loss<T: Real>(
    g: &mut Graph<T>,
    p: &ParamStore<T>,
    cfg: &TokenizerConfig,
    mel_norm: &Tensor<T>,
) -> Result<Var> {
    let pass = forward(g, p, cfg, mel_norm)?;
    g.mse(pass.recon, pass.target)
}

impl Tokenizer {
    pub fn new(cfg: TokenizerConfig, seed: u64) -> Self {
        let params = init_params(&cfg, seed);
        Self {
            cfg,
            params,
            seed,
            steps: 0,
        }
    }

    pub fn codes(&self, mel: &MelSpectrogram) -> Result<Vec<CodeVector>> {
        let mut g = Graph::<f32>::new();
        let pass = forward(&mut g, &self.params, &self.cfg, &mel.normalized())?;
        let d = g.value(pass.digits);
        Ok((0..d.rows())
            .map(|i| CodeVector {
                digits: d.row(i).iter().map(|v| v.round() as i32).collect(),
            })
            .collect())
    }

    pub fn tokenize_mel(&self, mel: &MelSpectrogram) -> Result<TokenSequence> {
        let ids = self
            .codes(mel)?
            .iter()
            .map(|c| token_index(c, &self.cfg.fsq))
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenSequence::new(ids))
    }

    /// Mel at 100 fps, stride-4 encoder, one id per 40 ms.
    pub fn tokenize_audio(&self, w: &Waveform) -> Result<TokenSequence> {
        let mel = mel_spectrogram(w, &MelConfig::default()).map_err(|e| match e {
            Error::EmptyInput(m) => Error::EmptyInput(format!("no tokens: {m}")),
            other => other,
        })?;
        self.tokenize_mel(&mel)
    }

    /// Decoder output for a token sequence, as a normalized mel tensor.
    pub fn decode_tokens(&self, seq: &TokenSequence) -> Result<Tensor<f32>> {
        let d = self.cfg.fsq.d;
        let mut data = Vec::with_capacity(seq.len() * d);
        for &id in &seq.ids {
            data.extend(index_to_code(id, &self.cfg.fsq)?.digits.iter().map(|&v| v as f32));
        }
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::matrix(seq.len(), d, data)?);
        let u = linear(&mut g, &self.params, "fsq.up", x)?;
        let u = linear(&mut g, &self.params, "dec.l1", u)?;
        let u = g.gelu(u);
        let out = linear(&mut g, &self.params, "dec.out", u)?;
        g.value(out).reshape(&[seq.len() * MEL_FRAMES_PER_TOKEN, self.cfg.n_mels])
    }

    /// Adam on the reconstruction loss, one random crop per step.
    pub fn train(
        &mut self,
        mels: &[MelSpectrogram],
        steps: usize,
        mut log: impl FnMut(usize, f64),
    ) -> Result<f64> {
        if mels.is_empty() {
            return Err(Error::EmptyInput("tokenizer training needs mels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x70c3);
        let mut opt = Adam::new(AdamConfig {
            lr: self.cfg.lr,
            ..AdamConfig::default()
        });
        let normed: Vec<Tensor<f32>> = mels.iter().map(MelSpectrogram::normalized).collect();
        let mut last = f64::NAN;
        for step in 0..steps {
            let m = &normed[rng.random_range(0..normed.len())];
            let max = self.cfg.max_train_frames.max(MEL_FRAMES_PER_TOKEN);
            let crop = if m.rows() > max {
                let start = rng.random_range(0..=(m.rows() - max) / MEL_FRAMES_PER_TOKEN) * MEL_FRAMES_PER_TOKEN;
                m.slice_rows(start, max)?
            } else {
                m.clone()
            };
            let mut g = Graph::new();
            let loss = reconstruction_loss(&mut g, &self.params, &self.cfg, &crop)?;
            last = g.value(loss).item() as f64;
            if !last.is_finite() {
                return Err(Error::NonFinite { op: "tokenizer loss" });
            }
            log(step, last);
            let grads = g.backward(loss)?;
            opt.step(&mut self.params, &grads.named());
            self.steps += 1;
        }
        Ok(last)
    }

    pub fn meta(&self) -> TokenizerMeta {
        TokenizerMeta {
            kind: "tokenizer".into(),
            cfg: self.cfg.clone(),
            seed: self.seed,
            steps: self.steps,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        artifact::save(path, &self.params, &self.meta())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta): (_, TokenizerMeta) = artifact::load(path, "tokenizer")?;
        Ok(Self {
            cfg: meta.cfg,
            params,
            seed: meta.seed,
            steps: meta.steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SAMPLE_RATE;

    fn chirp(seconds: f64) -> Waveform {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                (0.3 * (2.0 * std::f64::consts::PI * (200.0 + 400.0 * t) * t).sin()) as f32
            })
            .collect();
        Waveform::new(s, SAMPLE_RATE).unwrap()
    }

    #[test]
    fn two_seconds_give_25_hz_tokens() {
        let tok = Tokenizer::new(TokenizerConfig::default(), 1);
        let seq = tok.tokenize_audio(&chirp(2.0)).unwrap();
        assert!((48..=50).contains(&seq.len()), "{}", seq.len());
        assert_eq!(seq.len(), 197 / 4);
        assert_eq!(seq, tok.tokenize_audio(&chirp(2.0)).unwrap());
    }

    #[test]
    fn too_short_audio_is_empty() {
        let tok = Tokenizer::new(TokenizerConfig::default(), 1);
        let w = Waveform::new(vec![0.1; 1000], SAMPLE_RATE).unwrap();
        assert!(matches!(tok.tokenize_audio(&w), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn training_reduces_loss() {
        let mut tok = Tokenizer::new(TokenizerConfig::default(), 2);
        let mel = mel_spectrogram(&chirp(1.0), &MelConfig::default()).unwrap();
        let mut first = None;
        let last = tok
            .train(std::slice::from_ref(&mel), 60, |_, l| {
                first.get_or_insert(l);
            })
            .unwrap();
        assert!(last < first.unwrap());
    }
}
