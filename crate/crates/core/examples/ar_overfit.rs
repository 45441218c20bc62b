//! Trains the autoregressive model on a 32-utterance synthetic corpus and
//! reports teacher-forced accuracy.
//!
//! cargo run --release --example ar_overfit -- [steps] [d_model] [blocks]

use std::time::Instant;

use pilot_tts::ar::{ArConfig, ArModel};
use pilot_tts::conditioner::Featurizer;
use pilot_tts::corpus::{make_corpus, CorpusSpec, CrossSampler};
use pilot_tts::dataset::{ar_example, load_utterances};
use pilot_tts::fsq::{Tokenizer, TokenizerConfig};
use pilot_tts::audio::{mel_spectrogram, MelConfig};

fn main() -> pilot_tts::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let steps = args.first().copied().unwrap_or(2000);
    let d = args.get(1).copied().unwrap_or(96);
    let blocks = args.get(2).copied().unwrap_or(2);

    let dir = tempfile::tempdir()?;
    let records = make_corpus(dir.path(), &CorpusSpec::default())?;
    let featurizer = Featurizer::default();
    let mut tokenizer = Tokenizer::new(TokenizerConfig::default(), 0);
    let mels = records
        .iter()
        .map(|r| {
            let w = pilot_tts::audio::wav::read_wav(dir.path().join(&r.audio_path))?;
            mel_spectrogram(&w, &MelConfig::default())
        })
        .collect::<pilot_tts::Result<Vec<_>>>()?;
    let t0 = Instant::now();
    let tl = tokenizer.train(&mels, 300, |_, _| {})?;
    println!("tokenizer loss {tl:.4} in {:.1?}", t0.elapsed());

    let utts = load_utterances(&records, dir.path(), &tokenizer, &featurizer)?;
    let n_tokens: usize = utts.iter().map(|u| u.tokens.len()).sum();
    println!("{} utterances, {n_tokens} tokens", utts.len());

    let cfg = ArConfig::with_dims(d, 4, blocks);
    let mut model = ArModel::new(cfg.clone(), 0, featurizer.seed);
    println!("{} parameters", model.params.num_scalars());
    let mut sampler = CrossSampler::new(&records, 1)?;
    let t0 = Instant::now();
    let last = model.train(
        steps,
        |_| {
            (0..4)
                .map(|_| {
                    let (t, r) = sampler.draw_indices();
                    ar_example(&utts[t], &utts[r], cfg.variant)
                })
                .collect()
        },
        |step, loss| {
            if step % 100 == 0 {
                println!("step {step:5} loss {loss:.4} ({:.1?})", t0.elapsed());
            }
        },
    )?;
    println!("final loss {last:.4} after {:.1?}", t0.elapsed());

    let mut eval = CrossSampler::new(&records, 99)?;
    let inputs = (0..utts.len())
        .map(|t| ar_example(&utts[t], &utts[eval.reference_for(t)], cfg.variant))
        .collect::<pilot_tts::Result<Vec<_>>>()?;
    println!("teacher-forced accuracy {:.4}", model.teacher_forced_accuracy(&inputs)?);
    Ok(())
}
