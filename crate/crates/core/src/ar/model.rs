use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sequence::{assemble, ArInput, Condition, Variant};
use super::vocab::{build_vocab, Vocab, AUDIO_BASE, EA_CLASS, HEAD_CLASSES, VOCAB_SIZE};
use crate::artifact;
use crate::conditioner::{init_qformer, qformer_forward, QFormerConfig, SpeakerEmbedding, D_SPK};
use crate::error::{Error, Result};
use crate::fsq::TokenSequence;
use crate::numerics::kernels::{sinusoidal_table, softmax_rows};
use crate::numerics::nn::{feed_forward, init_attention, init_feed_forward, layer_norm, linear, multi_head_attention, AttentionSpec};
use crate::numerics::{Adam, AdamConfig, Graph, ParamStore, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArConfig {
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ff_hidden: usize,
    pub context: usize,
    pub variant: Variant,
    pub qformer: QFormerConfig,
    pub lr: f64,
    pub warmup: usize,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self::with_dims(128, 4, 4)
    }
}

impl ArConfig {
    pub fn with_dims(d_model: usize, heads: usize, blocks: usize) -> Self {
        Self {
            d_model,
            heads,
            blocks,
            ff_hidden: 4 * d_model,
            context: 1024,
            variant: Variant::Full,
            qformer: QFormerConfig {
                d_model,
                heads,
                ff_hidden: 2 * d_model,
                ..QFormerConfig::default()
            },
            lr: 2e-3,
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

pub fn init_params<T: Real>(cfg: &ArConfig, seed: u64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let mut p = ParamStore::new();
    p.insert("tok_emb", Tensor::randn(&[VOCAB_SIZE as usize, d], 1.0, &mut rng));
    p.init_linear("spk_proj", D_SPK, d, 1.0, &mut rng);
    p.init_linear("cond_proj", d, d, 1.0, &mut rng);
    init_qformer(&mut p, "qf", &cfg.qformer, &mut rng);
    for b in 0..cfg.blocks {
        p.init_layer_norm(&format!("blk{b}.ln1"), d);
        init_attention(&mut p, &format!("blk{b}.attn"), cfg.spec(), d, &mut rng);
        p.init_layer_norm(&format!("blk{b}.ln2"), d);
        init_feed_forward(&mut p, &format!("blk{b}.ff"), d, cfg.ff_hidden, &mut rng);
    }
    p.init_layer_norm("ln_f", d);
    // Zero head: the untrained distribution over classes is uniform.
    p.insert("head.weight", Tensor::zeros(&[d, HEAD_CLASSES]));
    p.insert("head.bias", Tensor::zeros(&[1, HEAD_CLASSES]));
    p
}

/// Input stream `L x d_model` with positions added.
pub fn embed<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &ArConfig, inp: &ArInput) -> Result<Var> {
    if inp.variant != cfg.variant {
        return Err(Error::Contract(format!(
            "sequence built for {:?}, model is {:?}",
            inp.variant, cfg.variant
        )));
    }
    if inp.len() > cfg.context {
        return Err(Error::Range(format!("sequence of {} exceeds context {}", inp.len(), cfg.context)));
    }
    let mut rows = Vec::with_capacity(3);
    if cfg.variant.has_speaker() {
        let s = g.constant(inp.s.to_tensor().cast());
        rows.push(linear(g, p, "spk_proj", s)?);
    }
    if cfg.variant.has_condition_tokens() {
        let c = match &inp.cond {
            Condition::Tokens(t) => g.constant(t.cast()),
            Condition::Reference(f) => {
                let x = g.constant(f.0.cast());
                qformer_forward(g, p, "qf", &cfg.qformer, x)?
            }
        };
        rows.push(linear(g, p, "cond_proj", c)?);
    }
    let table = g.param(p, "tok_emb")?;
    let ids: Vec<usize> = inp.ids.iter().map(|&i| i as usize).collect();
    rows.push(g.gather_rows(table, &ids)?);
    let x = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows)? };
    let pos = g.constant(sinusoidal_table(inp.len(), cfg.d_model));
    g.add(x, pos)
}

/// Causal pre-norm decoder stack; returns normalized hidden states.
pub fn trunk<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &ArConfig, mut x: Var) -> Result<Var> {
    for b in 0..cfg.blocks {
        x = decoder_block(g, p, cfg, &format!("blk{b}"), x)?;
    }
    layer_norm(g, p, "ln_f", x)
}

pub fn decoder_block<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &ArConfig, prefix: &str, x: Var) -> Result<Var> {
    let h = layer_norm(g, p, &format!("{prefix}.ln1"), x)?;
    let a = multi_head_attention(g, p, &format!("{prefix}.attn"), cfg.spec(), h, h, None, true)?;
    let x = g.add(x, a)?;
    let h = layer_norm(g, p, &format!("{prefix}.ln2"), x)?;
    let f = feed_forward(g, p, &format!("{prefix}.ff"), h)?;
    g.add(x, f)
}

/// Head logits for selected rows of the hidden states.
pub fn logits_at<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, hidden: Var, rows: &[usize]) -> Result<Var> {
    let h = g.gather_rows(hidden, rows)?;
    linear(g, p, "head", h)
}

/// Logits at every position, `L x HEAD_CLASSES`.
pub fn all_logits<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &ArConfig, inp: &ArInput) -> Result<Var> {
    let x = embed(g, p, cfg, inp)?;
    let h = trunk(g, p, cfg, x)?;
    linear(g, p, "head", h)
}

/// Mean cross-entropy over every masked position of the batch.
pub fn teacher_forced_loss<T: Real>(g: &mut Graph<T>, p: &ParamStore<T>, cfg: &ArConfig, batch: &[ArInput]) -> Result<Var> {
    let total: usize = batch.iter().map(|b| b.targets().len()).sum();
    if total == 0 {
        return Err(Error::Contract("no masked positions in the batch".into()));
    }
    let mut terms = Vec::new();
    for inp in batch {
        let targets = inp.targets();
        if targets.is_empty() {
            continue;
        }
        let x = embed(g, p, cfg, inp)?;
        let h = trunk(g, p, cfg, x)?;
        let rows: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let logits = logits_at(g, p, h, &rows)?;
        let logp = g.log_softmax_rows(logits)?;
        let picks: Vec<(usize, usize)> = targets.iter().enumerate().map(|(j, t)| (j, t.1)).collect();
        let nll = g.nll(logp, &picks)?;
        terms.push(g.scale(nll, targets.len() as f64 / total as f64));
    }
    let mut loss = terms[0];
    for &t in &terms[1..] {
        loss = g.add(loss, t)?;
    }
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub top_k: usize,
    /// `0` means greedy.
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            top_k: 25,
            temperature: 1.0,
            max_tokens: 400,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn greedy(max_tokens: usize) -> Self {
        Self {
            top_k: 1,
            temperature: 0.0,
            max_tokens,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub tokens: TokenSequence,
    /// Stopped at `max_tokens` without emitting `e_EA`.
    pub truncated: bool,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Temperature / top-k draw from one logit row.
pub fn sample_class(row: &[f32], s: &SamplingConfig, rng: &mut ChaCha8Rng) -> usize {
    if s.top_k == 1 || s.temperature <= 0.0 {
        return argmax(row);
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    if s.top_k > 0 && s.top_k < row.len() {
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(s.top_k);
    }
    let scaled: Vec<f64> = idx.iter().map(|&i| row[i] as f64 / s.temperature).collect();
    let probs = softmax_rows(&Tensor::row_vector(scaled).expect("non-empty")).expect("finite");
    let dist = WeightedIndex::new(probs.data()).expect("positive weights");
    idx[dist.sample(rng)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArMeta {
    pub kind: String,
    pub cfg: ArConfig,
    pub vocab: Vocab,
    pub seed: u64,
    pub steps: u64,
    pub featurizer_seed: u64,
}

#[derive(Clone, Debug)]
pub struct ArModel {
    pub cfg: ArConfig,
    pub params: ParamStore<f32>,
    pub seed: u64,
    pub steps: u64,
    pub featurizer_seed: u64,
}

impl ArModel {
    pub fn new(cfg: ArConfig, seed: u64, featurizer_seed: u64) -> Self {
        let params = init_params(&cfg, seed);
        Self {
            cfg,
            params,
            seed,
            steps: 0,
            featurizer_seed,
        }
    }

    pub fn loss(&self, batch: &[ArInput]) -> Result<f64> {
        let mut g = Graph::new();
        let l = teacher_forced_loss(&mut g, &self.params, &self.cfg, batch)?;
        Ok(g.value(l).item() as f64)
    }

    /// Fraction of masked positions whose argmax class is the target.
    pub fn teacher_forced_accuracy(&self, inputs: &[ArInput]) -> Result<f64> {
        let (mut hit, mut n) = (0usize, 0usize);
        for inp in inputs {
            let targets = inp.targets();
            if targets.is_empty() {
                continue;
            }
            let mut g = Graph::new();
            let x = embed(&mut g, &self.params, &self.cfg, inp)?;
            let h = trunk(&mut g, &self.params, &self.cfg, x)?;
            let rows: Vec<usize> = targets.iter().map(|t| t.0).collect();
            let logits = logits_at(&mut g, &self.params, h, &rows)?;
            let l = g.value(logits);
            for (j, t) in targets.iter().enumerate() {
                hit += (argmax(l.row(j)) == t.1) as usize;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Contract("no masked positions to score".into()));
        }
        Ok(hit as f64 / n as f64)
    }

    /// Replaces a reference condition by its Q-Former output.
    pub fn resolve_condition(&self, cond: &Condition) -> Result<Condition> {
        match cond {
            Condition::Tokens(_) => Ok(cond.clone()),
            Condition::Reference(f) => {
                let mut g = Graph::new();
                let x = g.constant(f.0.clone());
                let c = qformer_forward(&mut g, &self.params, "qf", &self.cfg.qformer, x)?;
                Ok(Condition::Tokens(g.value(c).clone()))
            }
        }
    }

    /// Samples audio tokens after `e_BA` until `e_EA` or `max_tokens`.
    pub fn generate(
        &self,
        text: &str,
        s: &SpeakerEmbedding,
        cond: &Condition,
        lang: &str,
        emo: Option<&str>,
        sampling: &SamplingConfig,
    ) -> Result<Generation> {
        let cond = if self.cfg.variant.has_condition_tokens() {
            self.resolve_condition(cond)?
        } else {
            cond.clone()
        };
        let mut seq = assemble(text, &TokenSequence::new(vec![]), s.clone(), cond, lang, emo, self.cfg.variant)?.prompt();
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut out = Vec::new();
        while out.len() < sampling.max_tokens {
            if seq.len() >= self.cfg.context {
                break;
            }
            let mut g = Graph::new();
            let x = embed(&mut g, &self.params, &self.cfg, &seq)?;
            let h = trunk(&mut g, &self.params, &self.cfg, x)?;
            let logits = logits_at(&mut g, &self.params, h, &[seq.len() - 1])?;
            let class = sample_class(g.value(logits).row(0), sampling, &mut rng);
            if class == EA_CLASS {
                return Ok(Generation {
                    tokens: TokenSequence::new(out),
                    truncated: false,
                });
            }
            out.push(class as u32);
            seq.ids.push(AUDIO_BASE + class as u32);
            seq.mask.push(false);
        }
        Ok(Generation {
            tokens: TokenSequence::new(out),
            truncated: true,
        })
    }

    /// Adam with linear warmup then cosine decay to a tenth of the rate.
    /// `batch` supplies the sequences of each step.
    pub fn train(
        &mut self,
        steps: usize,
        mut batch: impl FnMut(usize) -> Result<Vec<ArInput>>,
        mut log: impl FnMut(usize, f64),
    ) -> Result<f64> {
        let mut opt = Adam::new(AdamConfig {
            lr: self.cfg.lr,
            ..AdamConfig::default()
        });
        let mut last = f64::NAN;
        for step in 0..steps {
            let inputs = batch(step)?;
            let mut g = Graph::new();
            let loss = teacher_forced_loss(&mut g, &self.params, &self.cfg, &inputs)?;
            last = g.value(loss).item() as f64;
            if !last.is_finite() {
                return Err(Error::NonFinite { op: "ar loss" });
            }
            log(step, last);
            let grads = g.backward(loss)?;
            let lr = schedule(self.cfg.lr, self.cfg.warmup, steps, step);
            opt.step_with_lr(&mut self.params, &grads.named(), lr);
            self.steps += 1;
        }
        Ok(last)
    }

    pub fn meta(&self) -> ArMeta {
        ArMeta {
            kind: "ar".into(),
            cfg: self.cfg.clone(),
            vocab: build_vocab(),
            seed: self.seed,
            steps: self.steps,
            featurizer_seed: self.featurizer_seed,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        artifact::save(path, &self.params, &self.meta())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta): (_, ArMeta) = artifact::load(path, "ar")?;
        if meta.vocab != build_vocab() {
            return Err(Error::Checkpoint("vocabulary layout differs from this build".into()));
        }
        Ok(Self {
            cfg: meta.cfg,
            params,
            seed: meta.seed,
            steps: meta.steps,
            featurizer_seed: meta.featurizer_seed,
        })
    }
}

/// Linear warmup, then cosine from `lr` down to `lr / 10`.
pub fn schedule(lr: f64, warmup: usize, total: usize, step: usize) -> f64 {
    if step < warmup {
        return lr * (step + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let t = ((step - warmup) as f64 / span).min(1.0);
    lr * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioner::{ContentFeatures, N_QUERIES};
    use crate::numerics::Tensor;

    fn small(variant: Variant) -> ArConfig {
        let mut cfg = ArConfig::with_dims(16, 2, 1);
        cfg.qformer.d_feat = 8;
        cfg.variant = variant;
        cfg.lr = 1e-2;
        cfg.warmup = 5;
        cfg
    }

    fn item(cfg: &ArConfig, text: &str, tokens: &[u32], seed: u64) -> ArInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = SpeakerEmbedding(Tensor::<f32>::randn(&[64], 0.125, &mut rng).into_data());
        let feats = ContentFeatures(Tensor::randn(&[12, cfg.qformer.d_feat], 1.0, &mut rng));
        assemble(
            text,
            &TokenSequence::new(tokens.to_vec()),
            s,
            Condition::Reference(feats),
            "zh",
            None,
            cfg.variant,
        )
        .unwrap()
    }

    #[test]
    fn untrained_loss_is_log_class_count() {
        let cfg = small(Variant::Full);
        let m = ArModel::new(cfg.clone(), 1, 0);
        let batch = vec![item(&cfg, "hello", &[3, 9, 6000, 27], 4)];
        let l = m.loss(&batch).unwrap();
        assert!((l - (HEAD_CLASSES as f64).ln()).abs() < 0.1, "{l}");
    }

    #[test]
    fn duplicated_batch_keeps_loss() {
        let cfg = small(Variant::NoSpk);
        let mut m = ArModel::new(cfg.clone(), 2, 0);
        m.params.insert("head.weight", Tensor::randn(&[16, HEAD_CLASSES], 0.3, &mut ChaCha8Rng::seed_from_u64(5)));
        let a = item(&cfg, "abc", &[1, 2, 3, 4, 5], 7);
        let b = item(&cfg, "hello there", &[10, 20], 8);
        let one = m.loss(&[a.clone(), b.clone()]).unwrap();
        let two = m.loss(&[a.clone(), b.clone(), a, b]).unwrap();
        assert!((one - two).abs() < 1e-6);
    }

    #[test]
    fn empty_batch_mask_is_contract_error() {
        let cfg = small(Variant::NoBoth);
        let m = ArModel::new(cfg.clone(), 3, 0);
        let prompt = item(&cfg, "abc", &[], 1);
        assert!(matches!(m.loss(&[prompt]), Err(Error::Contract(_))));
    }

    #[test]
    fn causal_in_f64() {
        let cfg = small(Variant::Full);
        let mut p: ParamStore<f64> = init_params(&cfg, 9);
        p.insert("head.weight", Tensor::randn(&[16, HEAD_CLASSES], 0.3, &mut ChaCha8Rng::seed_from_u64(1)));
        let base = item(&cfg, "abcd", &[5, 6, 7, 8, 9, 10], 2);
        let logits = |inp: &ArInput| {
            let mut g = Graph::<f64>::new();
            let l = all_logits(&mut g, &p, &cfg, inp).unwrap();
            g.value(l).clone()
        };
        let reference = logits(&base);
        let off = cfg.variant.cond_slots();
        for t in [off + 1, off + 5, base.len() - 3, base.len() - 1] {
            let mut changed = base.clone();
            changed.ids[t - off] = 42;
            let out = logits(&changed);
            for r in 0..t {
                assert_eq!(out.row(r), reference.row(r), "row {r} moved when perturbing {t}");
            }
            assert_ne!(out.row(t), reference.row(t));
        }
    }

    #[test]
    fn text_region_logits_get_no_gradient() {
        let cfg = small(Variant::Full);
        let mut p: ParamStore<f64> = init_params(&cfg, 11);
        p.insert("head.weight", Tensor::randn(&[16, HEAD_CLASSES], 0.3, &mut ChaCha8Rng::seed_from_u64(2)));
        let inp = item(&cfg, "some text", &[1, 2, 3], 3);
        let mut g = Graph::<f64>::new();
        let logits = all_logits(&mut g, &p, &cfg, &inp).unwrap();
        let logp = g.log_softmax_rows(logits).unwrap();
        let loss = g.nll(logp, &inp.targets()).unwrap();
        let grads = g.backward(loss).unwrap();
        let d = grads.get(logits).unwrap();
        let first_target = inp.targets()[0].0;
        for r in 0..first_target {
            assert!(d.row(r).iter().all(|&v| v == 0.0), "row {r}");
        }
        assert!(d.row(first_target).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn overfit_one_sequence_then_greedy_replays_it() {
        let cfg = small(Variant::Full);
        let mut m = ArModel::new(cfg.clone(), 4, 0);
        let tokens = [17u32, 4000, 17, 256, 6560, 0, 99];
        let inp = item(&cfg, "memorize", &tokens, 5);
        let last = m.train(300, |_| Ok(vec![inp.clone()]), |_, _| {}).unwrap();
        assert!(last < 0.05, "final loss {last}");
        let gen = m
            .generate("memorize", &inp.s, &inp.cond, "zh", None, &SamplingConfig::greedy(20))
            .unwrap();
        assert_eq!(gen.tokens.ids, tokens);
        assert!(!gen.truncated);

        let s1 = SamplingConfig { seed: 3, max_tokens: 12, ..SamplingConfig::default() };
        let a = m.generate("memorize", &inp.s, &inp.cond, "zh", None, &s1).unwrap();
        let b = m.generate("memorize", &inp.s, &inp.cond, "zh", None, &s1).unwrap();
        assert_eq!(a, b);
        for seed in [0, 7, 99] {
            let k1 = SamplingConfig { top_k: 1, temperature: 1.0, max_tokens: 12, seed };
            let g = m.generate("memorize", &inp.s, &inp.cond, "zh", None, &k1).unwrap();
            assert_eq!(g, gen);
        }
    }

    #[test]
    fn max_tokens_sets_truncation_flag() {
        let cfg = small(Variant::NoBoth);
        let m = ArModel::new(cfg.clone(), 6, 0);
        let inp = item(&cfg, "x", &[], 1);
        let g = m.generate("x", &inp.s, &inp.cond, "zh", None, &SamplingConfig::greedy(3)).unwrap();
        assert_eq!(g.tokens.len(), 3);
        assert!(g.truncated);
    }

    #[test]
    fn all_variants_train() {
        for v in Variant::ALL {
            let cfg = small(v);
            let mut m = ArModel::new(cfg.clone(), 8, 0);
            let inp = item(&cfg, "ab", &[1, 2], 1);
            m.train(2, |_| Ok(vec![inp.clone()]), |_, _| {}).unwrap();
            assert_eq!(m.steps, 2);
        }
        assert_eq!(N_QUERIES, 32);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ar.ckpt");
        let m = ArModel::new(small(Variant::NoSpk), 3, 77);
        m.save(&path).unwrap();
        let back = ArModel::load(&path).unwrap();
        assert_eq!(back.cfg, m.cfg);
        assert_eq!(back.featurizer_seed, 77);
        assert_eq!(back.params.to_bytes(), m.params.to_bytes());
    }
}
