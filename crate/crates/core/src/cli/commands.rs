use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::ar::{ArConfig, ArInput, ArModel, Variant};
use crate::audio::wav::{read_wav, write_wav};
use crate::audio::{griffin_lim, mel_spectrogram, MelConfig};
use crate::cfm::{euler_sample, write_mel_tensor, DecoderCondition, DitLite};
use crate::conditioner::Featurizer;
use crate::corpus::{make_corpus, CrossSampler};
use crate::curation::{read_manifest, run_pipeline, ScorerSet, SampleRecord, Summary};
use crate::dataset::{ar_example, load_utterances, Utterance};
use crate::error::{Error, Result};
use crate::fsq::Tokenizer;
use crate::numerics::Tensor;
use crate::selfcheck::{self, CheckOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Tokenizer,
    Ar,
    Cfm,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tokenizer" => Ok(Stage::Tokenizer),
            "ar" => Ok(Stage::Ar),
            "cfm" => Ok(Stage::Cfm),
            _ => Err(Error::Config(format!("unknown stage `{s}`; valid: tokenizer, ar, cfm"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Tokenizer => "tokenizer",
            Stage::Ar => "ar",
            Stage::Cfm => "cfm",
        }
    }
}

/// Writes the synthetic corpus described by `corpus.*` next to
/// `paths.corpus`.
pub fn cmd_corpus(cfg: &RunConfig) -> Result<Vec<SampleRecord>> {
    let dir = cfg.corpus_manifest.parent().unwrap_or(Path::new("."));
    let records = make_corpus(dir, &cfg.corpus)?;
    let written = dir.join(crate::corpus::MANIFEST_NAME);
    if written != cfg.corpus_manifest {
        fs::rename(&written, &cfg.corpus_manifest)?;
    }
    Ok(records)
}

pub fn cmd_curate(cfg: &RunConfig, input: &Path, output: &Path) -> Result<Summary> {
    if !input.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("manifest {} not found", input.display()),
        )));
    }
    let scorers = ScorerSet::from_names(&cfg.scorers)?;
    run_pipeline(input, output, &cfg.policy, &scorers)
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub stage: Stage,
    pub checkpoint: PathBuf,
    pub loss_log: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn load_stage<T>(cfg: &RunConfig, stage: &str, load: impl Fn(&Path) -> Result<T>) -> Result<T> {
    let path = cfg.checkpoint(stage);
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "{stage} checkpoint {} is missing; run `ptts train {stage}` first",
            path.display()
        )));
    }
    load(&path)
}

/// Records usable for training: everything not explicitly rejected.
pub fn training_records(cfg: &RunConfig) -> Result<(Vec<SampleRecord>, PathBuf)> {
    let manifest = &cfg.corpus_manifest;
    if !manifest.exists() {
        return Err(Error::Dependency(format!(
            "corpus manifest {} is missing; run `ptts corpus` or set paths.corpus",
            manifest.display()
        )));
    }
    let records: Vec<SampleRecord> = read_manifest(manifest)?.into_iter().filter(|r| r.kept != Some(false)).collect();
    if records.is_empty() {
        return Err(Error::EmptyInput(format!("no usable records in {}", manifest.display())));
    }
    Ok((records, manifest.parent().unwrap_or(Path::new("")).to_path_buf()))
}

fn write_loss_log(path: &Path, losses: &[(usize, f64)]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::from("step,loss\n");
    for (s, l) in losses {
        writeln!(out, "{s},{l}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

fn ar_batch(utts: &[Utterance], sampler: &mut CrossSampler, size: usize, variant: Variant) -> Result<Vec<ArInput>> {
    (0..size)
        .map(|_| {
            let (t, r) = sampler.draw_indices();
            ar_example(&utts[t], &utts[r], variant)
        })
        .collect()
}

fn decoder_item(target: &Utterance, reference: &Utterance) -> (DecoderCondition, Tensor<f32>) {
    (
        DecoderCondition {
            m_ref: reference.mel.clone(),
            s: reference.s.clone(),
            tgt_tokens: target.tokens.clone(),
        },
        target.mel.normalized(),
    )
}

/// Trains an AR model of configuration `ar` from scratch.
pub fn train_ar(
    ar: &ArConfig,
    seed: u64,
    featurizer_seed: u64,
    utts: &[Utterance],
    records: &[SampleRecord],
    steps: usize,
    batch: usize,
) -> Result<(ArModel, Vec<(usize, f64)>)> {
    let mut model = ArModel::new(ar.clone(), seed, featurizer_seed);
    let mut sampler = CrossSampler::new(records, seed)?;
    let mut losses = Vec::new();
    if steps == 0 {
        let b = ar_batch(utts, &mut sampler, batch, ar.variant)?;
        losses.push((0, model.loss(&b)?));
    } else {
        model.train(steps, |_| ar_batch(utts, &mut sampler, batch, ar.variant), |s, l| {
            if s % 100 == 0 {
                log::info!("ar step {s} loss {l:.4}");
            }
            losses.push((s, l));
        })?;
    }
    Ok((model, losses))
}

pub fn cmd_train(cfg: &RunConfig, stage: Stage, steps: Option<usize>) -> Result<TrainReport> {
    let (records, base) = training_records(cfg)?;
    let featurizer = Featurizer::new(cfg.featurizer_seed);
    let checkpoint = cfg.checkpoint(stage.name());
    let loss_log = cfg.reports.join(format!("train_{}.csv", stage.name()));
    let losses = match stage {
        Stage::Tokenizer => {
            let steps = steps.unwrap_or(cfg.tokenizer_steps);
            let mels = records
                .iter()
                .map(|r| mel_spectrogram(&read_wav(crate::curation::resolve_audio_path(&base, &r.audio_path))?, &MelConfig::default()))
                .collect::<Result<Vec<_>>>()?;
            let mut tok = Tokenizer::new(cfg.tokenizer.clone(), cfg.seed);
            let mut losses = Vec::new();
            if steps == 0 {
                let mut g = crate::numerics::Graph::new();
                let l = crate::fsq::reconstruction_loss(&mut g, &tok.params, &tok.cfg, &mels[0].normalized())?;
                losses.push((0, g.value(l).item() as f64));
            } else {
                tok.train(&mels, steps, |s, l| losses.push((s, l)))?;
            }
            tok.save(&checkpoint)?;
            losses
        }
        Stage::Ar => {
            let tok = load_stage(cfg, "tokenizer", |p| Tokenizer::load(p))?;
            let utts = load_utterances(&records, &base, &tok, &featurizer)?;
            let steps = steps.unwrap_or(cfg.ar_steps);
            let (model, losses) = train_ar(&cfg.ar, cfg.seed, cfg.featurizer_seed, &utts, &records, steps, cfg.ar_batch)?;
            model.save(&checkpoint)?;
            losses
        }
        Stage::Cfm => {
            let tok = load_stage(cfg, "tokenizer", |p| Tokenizer::load(p))?;
            let utts = load_utterances(&records, &base, &tok, &featurizer)?;
            let steps = steps.unwrap_or(cfg.cfm_steps);
            let mut model = DitLite::new(cfg.cfm.clone(), cfg.flow.clone(), cfg.seed);
            let mut sampler = CrossSampler::new(&records, cfg.seed)?;
            let mut draw = |n: usize| -> Vec<(DecoderCondition, Tensor<f32>)> {
                (0..n)
                    .map(|_| {
                        let (t, r) = sampler.draw_indices();
                        decoder_item(&utts[t], &utts[r])
                    })
                    .collect()
            };
            let mut losses = Vec::new();
            if steps == 0 {
                losses.push((0, model.eval_loss(&draw(cfg.cfm_batch), cfg.seed)?));
            } else {
                model.train(steps, |_| Ok(draw(cfg.cfm_batch)), |s, l| {
                    if s % 100 == 0 {
                        log::info!("cfm step {s} loss {l:.4}");
                    }
                    losses.push((s, l));
                })?;
            }
            model.save(&checkpoint)?;
            losses
        }
    };
    write_loss_log(&loss_log, &losses)?;
    Ok(TrainReport {
        stage,
        checkpoint,
        loss_log,
        initial_loss: losses.first().map(|l| l.1).unwrap_or(f64::NAN),
        final_loss: losses.last().map(|l| l.1).unwrap_or(f64::NAN),
    })
}

#[derive(Clone, Debug)]
pub struct SynthRequest {
    pub text: String,
    pub reference: PathBuf,
    pub lang: Option<String>,
    pub emo: Option<String>,
    pub out_wav: PathBuf,
    pub out_mel: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthMeta {
    pub text: String,
    pub reference: String,
    pub lang: String,
    pub emo: String,
    pub seed: u64,
    pub tokens: Vec<u32>,
    pub truncated: bool,
    pub frames: usize,
}

pub fn cmd_synth(cfg: &RunConfig, req: &SynthRequest) -> Result<SynthMeta> {
    let (lang, emo) = crate::ar::resolve_tags(req.lang.as_deref(), req.emo.as_deref());
    crate::ar::vocab::lang_id(&lang)?;
    crate::ar::vocab::emo_id(&emo)?;
    load_stage(cfg, "tokenizer", |p| Tokenizer::load(p))?;
    let ar = load_stage(cfg, "ar", |p| ArModel::load(p))?;
    let dit = load_stage(cfg, "cfm", |p| DitLite::load(p))?;

    let w = read_wav(&req.reference)?;
    let featurizer = Featurizer::new(ar.featurizer_seed);
    let ref_mel = mel_spectrogram(&w, &MelConfig::default())?;
    let s = featurizer.speaker_embed(&w)?;
    let content = featurizer.content_from_mel(&ref_mel)?;
    let sampling = crate::ar::SamplingConfig {
        seed: cfg.seed,
        ..cfg.sampling.clone()
    };
    let generated = ar.generate(&req.text, &s, &crate::ar::Condition::Reference(content), &lang, Some(&emo), &sampling)?;
    if generated.tokens.is_empty() {
        return Err(Error::EmptyInput("the model produced no audio tokens".into()));
    }
    let cond = DecoderCondition {
        m_ref: ref_mel,
        s,
        tgt_tokens: generated.tokens.clone(),
    };
    let mel = euler_sample(&dit, &cond, cond.frames(), &cfg.flow, cfg.seed)?;
    write_mel_tensor(&req.out_mel, &mel)?;
    let audio = griffin_lim(&mel, cfg.vocoder_iters)?;
    write_wav(&req.out_wav, &audio.waveform)?;

    let meta = SynthMeta {
        text: req.text.clone(),
        reference: req.reference.display().to_string(),
        lang,
        emo,
        seed: cfg.seed,
        tokens: generated.tokens.ids,
        truncated: generated.truncated,
        frames: mel.frames,
    };
    fs::write(crate::artifact::sidecar_path(&req.out_mel), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub config: String,
    pub seed: u64,
    pub token_acc: f64,
    pub sim_proxy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Optimizer steps per configuration and seed; all equal.
    pub steps: Vec<(String, u64, u64)>,
    pub equal_budget: bool,
    pub csv: PathBuf,
}

/// Trains the three layouts per seed on the same budget and scores them.
/// `sim_proxy` is the cosine between the reference speaker embedding and
/// the embedding of the decoded mel; the decoder is the trained `cfm`
/// checkpoint, shared by all configurations.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<AblationReport> {
    let (records, base) = training_records(cfg)?;
    let tok = load_stage(cfg, "tokenizer", |p| Tokenizer::load(p))?;
    let dit = load_stage(cfg, "cfm", |p| DitLite::load(p))?;
    let featurizer = Featurizer::new(cfg.featurizer_seed);
    let utts = load_utterances(&records, &base, &tok, &featurizer)?;
    let n_eval = cfg.ablate_eval_items.clamp(1, utts.len());
    let eval_targets: Vec<usize> = (0..n_eval).map(|k| k * utts.len() / n_eval).collect();

    let mut rows = Vec::new();
    let mut steps = Vec::new();
    for &seed in &cfg.ablate_seeds {
        let mut pairing = CrossSampler::new(&records, seed ^ 0xab1a7e)?;
        let refs: Vec<usize> = (0..utts.len()).map(|t| pairing.reference_for(t)).collect();
        for variant in Variant::ALL {
            let ar = ArConfig { variant, ..cfg.ar.clone() };
            let (model, _) = train_ar(&ar, seed, cfg.featurizer_seed, &utts, &records, cfg.ablate_steps, cfg.ar_batch)?;
            let inputs = (0..utts.len())
                .map(|t| ar_example(&utts[t], &utts[refs[t]], variant))
                .collect::<Result<Vec<_>>>()?;
            let token_acc = model.teacher_forced_accuracy(&inputs)?;
            let mut sim = 0.0;
            for &t in &eval_targets {
                let (target, reference) = (&utts[t], &utts[refs[t]]);
                let sampling = crate::ar::SamplingConfig { seed, ..cfg.sampling.clone() };
                let r = &target.record;
                let g = model.generate(
                    &r.text,
                    &reference.s,
                    &crate::ar::Condition::Reference(reference.content.clone()),
                    &r.lang,
                    r.emo.as_deref(),
                    &sampling,
                )?;
                if g.tokens.is_empty() {
                    continue;
                }
                let cond = DecoderCondition {
                    m_ref: reference.mel.clone(),
                    s: reference.s.clone(),
                    tgt_tokens: g.tokens,
                };
                let mel = euler_sample(&dit, &cond, cond.frames(), &cfg.flow, seed)?;
                sim += featurizer.speaker_from_mel(&mel)?.cosine(&reference.s);
            }
            rows.push(AblationRow {
                config: variant.name().into(),
                seed,
                token_acc,
                sim_proxy: sim / eval_targets.len() as f64,
            });
            steps.push((variant.name().to_string(), seed, model.steps));
        }
    }
    let equal_budget = steps.windows(2).all(|w| w[0].2 == w[1].2);

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut csv = String::from("config,seed,token_acc,sim_proxy\n");
    for r in &rows {
        writeln!(csv, "{},{},{:.6},{:.6}", r.config, r.seed, r.token_acc, r.sim_proxy).expect("string write");
    }
    fs::write(out, csv)?;
    let report = AblationReport {
        rows,
        steps,
        equal_budget,
        csv: out.to_path_buf(),
    };
    let meta = serde_json::json!({
        "seeds": cfg.ablate_seeds,
        "steps_per_config": cfg.ablate_steps,
        "steps": report.steps,
        "equal_budget": report.equal_budget,
        "ar_dims": { "d_model": cfg.ar.d_model, "heads": cfg.ar.heads, "blocks": cfg.ar.blocks },
    });
    fs::write(crate::artifact::sidecar_path(out), serde_json::to_string_pretty(&meta)?)?;
    Ok(report)
}

pub fn cmd_selfcheck(cfg: &RunConfig) -> Result<Vec<CheckOutcome>> {
    selfcheck::run_all(cfg.seed)
}
