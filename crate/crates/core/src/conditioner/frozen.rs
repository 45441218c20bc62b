use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{mel_spectrogram, MelConfig, MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const DEFAULT_FEATURIZER_SEED: u64 = 0x5EED_F00D;
pub const D_FEAT: usize = 64;
pub const D_SPK: usize = 64;
pub const MIN_SPEAKER_AUDIO_S: f64 = 0.5;

/// Frozen content frames at 50 fps, `frames x D_FEAT`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeatures(pub Tensor<f32>);

impl ContentFeatures {
    pub fn frames(&self) -> usize {
        self.0.rows()
    }
}

/// Unit-norm static speaker vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeakerEmbedding(pub Vec<f32>);

impl SpeakerEmbedding {
    pub fn cosine(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (*a as f64) * (*b as f64)).sum()
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::row_vector(self.0.clone()).expect("non-empty")
    }
}

/// The two frozen stand-in encoders. Both are fixed random projections
/// drawn from one seed, so they are reproducible after a reload.
#[derive(Clone, Debug)]
pub struct Featurizer {
    pub seed: u64,
    content: Tensor<f64>,
    speaker: Tensor<f64>,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self::new(DEFAULT_FEATURIZER_SEED)
    }
}

impl Featurizer {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_mels = MelConfig::default().n_mels;
        let content = Tensor::randn(&[n_mels, D_FEAT], 1.0 / (n_mels as f64).sqrt(), &mut rng);
        let speaker = Tensor::randn(&[2 * n_mels, D_SPK], 1.0 / (2.0 * n_mels as f64).sqrt(), &mut rng);
        Self { seed, content, speaker }
    }

    pub fn content_from_mel(&self, mel: &MelSpectrogram) -> Result<ContentFeatures> {
        let pooled = mel.frames / 2;
        if pooled == 0 {
            return Err(Error::EmptyInput("content features need at least two mel frames".into()));
        }
        let x = mel.normalized();
        let mut out = vec![0.0f32; pooled * D_FEAT];
        for f in 0..pooled * 2 {
            let row = x.row(f);
            for j in 0..D_FEAT {
                let z: f64 = row.iter().enumerate().map(|(i, &v)| v as f64 * self.content.get(i, j)).sum();
                out[(f / 2) * D_FEAT + j] += (0.5 * z.tanh()) as f32;
            }
        }
        Ok(ContentFeatures(Tensor::matrix(pooled, D_FEAT, out)?))
    }

    /// Frozen linear + tanh on log-mel, average-pooled 2:1 to 50 fps.
    pub fn content_features(&self, w: &Waveform) -> Result<ContentFeatures> {
        self.content_from_mel(&mel_spectrogram(w, &MelConfig::default())?)
    }

    /// Per-bin mean and standard deviation of log-mel, each centered across
    /// bins, then a frozen projection and L2 normalization.
    pub fn speaker_from_mel(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        let bins = mel.bins;
        let n = mel.frames as f64;
        let mut mean = vec![0.0f64; bins];
        let mut sq = vec![0.0f64; bins];
        for f in 0..mel.frames {
            for (b, &v) in mel.frame(f).iter().enumerate() {
                mean[b] += v as f64 / n;
                sq[b] += (v as f64).powi(2) / n;
            }
        }
        let mut std: Vec<f64> = mean.iter().zip(&sq).map(|(m, s)| (s - m * m).max(0.0).sqrt()).collect();
        for v in [&mut mean, &mut std] {
            let c = v.iter().sum::<f64>() / bins as f64;
            v.iter_mut().for_each(|x| *x -= c);
        }
        let stats: Vec<f64> = mean.into_iter().chain(std).collect();
        let mut s: Vec<f64> = (0..D_SPK)
            .map(|j| stats.iter().enumerate().map(|(i, &x)| x * self.speaker.get(i, j)).sum())
            .collect();
        let norm = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::NotEstimable("speaker statistics are flat".into()));
        }
        s.iter_mut().for_each(|x| *x /= norm);
        Ok(SpeakerEmbedding(s.into_iter().map(|x| x as f32).collect()))
    }

    pub fn speaker_embed(&self, w: &Waveform) -> Result<SpeakerEmbedding> {
        if w.duration_s() < MIN_SPEAKER_AUDIO_S {
            return Err(Error::Range(format!(
                "speaker embedding needs at least {MIN_SPEAKER_AUDIO_S} s, got {:.3} s",
                w.duration_s()
            )));
        }
        self.speaker_from_mel(&mel_spectrogram(w, &MelConfig::default())?)
    }
}

pub fn content_features(w: &Waveform) -> Result<ContentFeatures> {
    Featurizer::default().content_features(w)
}

pub fn speaker_embed(w: &Waveform) -> Result<SpeakerEmbedding> {
    Featurizer::default().speaker_embed(w)
}
