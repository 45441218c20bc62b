//! Flat `key=value` run configuration with dotted keys. Later sources win:
//! built-in defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::ar::{ArConfig, SamplingConfig, Variant};
use crate::cfm::{DitConfig, FlowPathConfig};
use crate::conditioner::DEFAULT_FEATURIZER_SEED;
use crate::corpus::CorpusSpec;
use crate::curation::FilterPolicy;
use crate::error::{Error, Result};
use crate::fsq::TokenizerConfig;

pub const SEED_ENV: &str = "PTTS_SEED";

/// Every recognized key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "seed for every random draw (falls back to $PTTS_SEED)"),
    ("paths.work", "ptts-work", "root for derived paths"),
    ("paths.corpus", "", "training manifest (default <work>/corpus/manifest.jsonl)"),
    ("paths.checkpoints", "", "checkpoint folder (default <work>/checkpoints)"),
    ("paths.reports", "", "loss logs and reports (default <work>/reports)"),
    ("parallel_matmul", "false", "parallel matmul kernels; results are no longer bit-reproducible"),
    ("featurizer.seed", "", "seed of the frozen stand-in encoders"),
    ("corpus.speakers", "4", "synthetic speakers"),
    ("corpus.utts", "8", "utterances per speaker"),
    ("corpus.langs", "zh", "comma-separated language tags, round-robin over speakers"),
    ("corpus.truncated", "0", "extra start-truncated records"),
    ("corpus.emotions", "false", "cycle emotion tags through the utterances"),
    ("curate.scorers", "snr,rolloff,truncation,mos_stub,speech_stub", "scorers to run"),
    ("policy.min_pseudo_mos", "3.5", "keep pseudo-MOS strictly above; `none` disables"),
    ("policy.min_snr_db", "none", "minimum SNR in dB"),
    ("policy.min_rolloff_hz", "none", "minimum 85% rolloff frequency"),
    ("policy.require_speech", "true", "reject non-speech"),
    ("policy.reject_truncated", "true", "reject clipped onsets or offsets"),
    ("policy.reject_overlap", "false", "reject multi-speaker overlap"),
    ("policy.reject_synthetic", "false", "reject synthetic audio"),
    ("policy.require_speaker_consistent", "false", "reject speaker-inconsistent items"),
    ("tokenizer.steps", "400", "tokenizer training steps"),
    ("tokenizer.lr", "0.003", "tokenizer learning rate"),
    ("ar.d_model", "128", "AR width (shared with the Q-Former)"),
    ("ar.heads", "4", "AR attention heads"),
    ("ar.blocks", "4", "AR decoder blocks"),
    ("ar.ff_hidden", "", "AR feed-forward width (default 4 * d_model)"),
    ("ar.variant", "full", "full, no_spk or no_both"),
    ("ar.lr", "0.002", "AR peak learning rate"),
    ("ar.warmup", "50", "AR warmup steps"),
    ("ar.batch", "4", "AR sequences per step"),
    ("ar.steps", "2000", "AR training steps"),
    ("cfm.d_model", "128", "DiT-lite width"),
    ("cfm.heads", "4", "DiT-lite attention heads"),
    ("cfm.blocks", "4", "DiT-lite blocks"),
    ("cfm.lr", "0.001", "DiT-lite peak learning rate"),
    ("cfm.warmup", "50", "DiT-lite warmup steps"),
    ("cfm.batch", "4", "decoder items per step"),
    ("cfm.steps", "2000", "DiT-lite training steps"),
    ("flow.sigma_min", "0.0001", "path noise floor"),
    ("flow.steps", "10", "Euler steps at synthesis"),
    ("sampling.top_k", "25", "top-k cut-off; 1 is greedy"),
    ("sampling.temperature", "1.0", "sampling temperature; 0 is greedy"),
    ("sampling.max_tokens", "400", "generation limit in tokens"),
    ("vocoder.iters", "32", "Griffin-Lim iterations"),
    ("ablate.seeds", "1,2,3,4,5", "seeds of the ablation matrix"),
    ("ablate.steps", "600", "AR steps per configuration"),
    ("ablate.eval_items", "8", "utterances synthesized per configuration for the SIM proxy"),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn defaults() -> Self {
        let mut m: BTreeMap<String, String> = KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            m.insert("seed".into(), seed);
        }
        Self(m)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.0.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a config file: `key = value` lines, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.0.iter()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| Error::Config(format!("`{key}` has invalid value `{v}`")))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            "" | "none" => Ok(None),
            _ => self.parse(key).map(Some),
        }
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.get(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }
}

/// Typed view of a [`ConfigMap`].
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub map: ConfigMap,
    pub seed: u64,
    pub corpus_manifest: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
    pub parallel_matmul: bool,
    pub featurizer_seed: u64,
    pub corpus: CorpusSpec,
    pub scorers: Vec<String>,
    pub policy: FilterPolicy,
    pub tokenizer: TokenizerConfig,
    pub tokenizer_steps: usize,
    pub ar: ArConfig,
    pub ar_batch: usize,
    pub ar_steps: usize,
    pub cfm: DitConfig,
    pub cfm_batch: usize,
    pub cfm_steps: usize,
    pub flow: FlowPathConfig,
    pub sampling: SamplingConfig,
    pub vocoder_iters: usize,
    pub ablate_seeds: Vec<u64>,
    pub ablate_steps: usize,
    pub ablate_eval_items: usize,
}

impl RunConfig {
    /// Defaults, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = ConfigMap::defaults();
        if let Some(f) = file {
            map.apply_file(f)?;
        }
        for (k, v) in overrides {
            map.set(k, v)?;
        }
        Self::from_map(map)
    }

    pub fn from_map(map: ConfigMap) -> Result<Self> {
        let work = PathBuf::from(map.get("paths.work"));
        let path_or = |key: &str, fallback: PathBuf| match map.get(key) {
            "" => fallback,
            p => PathBuf::from(p),
        };
        let seed: u64 = map.parse("seed")?;
        let featurizer_seed = match map.get("featurizer.seed") {
            "" => DEFAULT_FEATURIZER_SEED,
            _ => map.parse("featurizer.seed")?,
        };

        let mut ar = ArConfig::with_dims(map.parse("ar.d_model")?, map.parse("ar.heads")?, map.parse("ar.blocks")?);
        if !map.get("ar.ff_hidden").is_empty() {
            ar.ff_hidden = map.parse("ar.ff_hidden")?;
        }
        ar.variant = Variant::parse(map.get("ar.variant"))?;
        ar.lr = map.parse("ar.lr")?;
        ar.warmup = map.parse("ar.warmup")?;
        if ar.heads == 0 || ar.d_model % ar.heads != 0 {
            return Err(Error::Config(format!("ar.d_model {} is not a multiple of ar.heads {}", ar.d_model, ar.heads)));
        }

        let mut cfm = DitConfig::with_dims(map.parse("cfm.d_model")?, map.parse("cfm.heads")?, map.parse("cfm.blocks")?);
        cfm.lr = map.parse("cfm.lr")?;
        cfm.warmup = map.parse("cfm.warmup")?;
        if cfm.heads == 0 || cfm.d_model % cfm.heads != 0 {
            return Err(Error::Config(format!("cfm.d_model {} is not a multiple of cfm.heads {}", cfm.d_model, cfm.heads)));
        }

        let flow = FlowPathConfig {
            sigma_min: map.parse("flow.sigma_min")?,
            steps: map.parse("flow.steps")?,
        };
        flow.validate().map_err(|e| Error::Config(e.to_string()))?;

        let tokenizer = TokenizerConfig {
            lr: map.parse("tokenizer.lr")?,
            ..TokenizerConfig::default()
        };
        let policy = FilterPolicy {
            min_pseudo_mos: map.opt_f64("policy.min_pseudo_mos")?,
            min_snr_db: map.opt_f64("policy.min_snr_db")?,
            min_rolloff_hz: map.opt_f64("policy.min_rolloff_hz")?,
            require_speech: map.parse("policy.require_speech")?,
            reject_truncated: map.parse("policy.reject_truncated")?,
            reject_overlap: map.parse("policy.reject_overlap")?,
            reject_synthetic: map.parse("policy.reject_synthetic")?,
            require_speaker_consistent: map.parse("policy.require_speaker_consistent")?,
        };
        let corpus = CorpusSpec {
            n_speakers: map.parse("corpus.speakers")?,
            utts_per_speaker: map.parse("corpus.utts")?,
            langs: map.list("corpus.langs"),
            seed,
            truncated: map.parse("corpus.truncated")?,
            emotions: map.parse("corpus.emotions")?,
        };
        let ablate_seeds = map
            .list("ablate.seeds")
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Config(format!("bad seed `{s}` in ablate.seeds"))))
            .collect::<Result<Vec<u64>>>()?;

        Ok(Self {
            seed,
            corpus_manifest: path_or("paths.corpus", work.join("corpus").join(crate::corpus::MANIFEST_NAME)),
            checkpoints: path_or("paths.checkpoints", work.join("checkpoints")),
            reports: path_or("paths.reports", work.join("reports")),
            parallel_matmul: map.parse("parallel_matmul")?,
            featurizer_seed,
            corpus,
            scorers: map.list("curate.scorers"),
            policy,
            tokenizer,
            tokenizer_steps: map.parse("tokenizer.steps")?,
            ar,
            ar_batch: map.parse::<usize>("ar.batch")?.max(1),
            ar_steps: map.parse("ar.steps")?,
            cfm,
            cfm_batch: map.parse::<usize>("cfm.batch")?.max(1),
            cfm_steps: map.parse("cfm.steps")?,
            flow,
            sampling: SamplingConfig {
                top_k: map.parse("sampling.top_k")?,
                temperature: map.parse("sampling.temperature")?,
                max_tokens: map.parse("sampling.max_tokens")?,
                seed,
            },
            vocoder_iters: map.parse("vocoder.iters")?,
            ablate_seeds,
            ablate_steps: map.parse("ablate.steps")?,
            ablate_eval_items: map.parse("ablate.eval_items")?,
            map,
        })
    }

    pub fn checkpoint(&self, stage: &str) -> PathBuf {
        self.checkpoints.join(format!("{stage}.ckpt"))
    }
}
