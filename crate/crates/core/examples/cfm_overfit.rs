//! Overfits the flow-matching decoder on one corpus utterance and reports
//! the 10-step Euler reconstruction error in normalized log-mel units.
//!
//! cargo run --release --example cfm_overfit -- [steps] [d_model] [blocks]

use std::time::Instant;

use pilot_tts::cfm::{euler_sample, DecoderCondition, DitConfig, DitLite, FlowPathConfig};
use pilot_tts::conditioner::Featurizer;
use pilot_tts::corpus::{make_corpus, CorpusSpec};
use pilot_tts::dataset::load_utterances;
use pilot_tts::fsq::{Tokenizer, TokenizerConfig};

fn main() -> pilot_tts::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let steps = args.first().copied().unwrap_or(3000);
    let d = args.get(1).copied().unwrap_or(64);
    let blocks = args.get(2).copied().unwrap_or(2);

    let dir = tempfile::tempdir()?;
    let spec = CorpusSpec { n_speakers: 2, utts_per_speaker: 2, ..CorpusSpec::default() };
    let records = make_corpus(dir.path(), &spec)?;
    // An untrained tokenizer still gives a deterministic token stream.
    let tokenizer = Tokenizer::new(TokenizerConfig::default(), 0);
    let utts = load_utterances(&records, dir.path(), &tokenizer, &Featurizer::default())?;
    let (target, reference) = (&utts[0], &utts[1]);
    let cond = DecoderCondition {
        m_ref: reference.mel.clone(),
        s: reference.s.clone(),
        tgt_tokens: target.tokens.clone(),
    };
    let x1 = target.mel.normalized();
    println!("target {} frames", x1.rows());

    let mut model = DitLite::new(DitConfig::with_dims(d, 4, blocks), FlowPathConfig::default(), 0);
    println!("{} parameters", model.params.num_scalars());
    let batch = vec![(cond.clone(), x1.clone()); 4];
    let t0 = Instant::now();
    let last = model.train(steps, |_| Ok(batch.clone()), |step, loss| {
        if step % 250 == 0 {
            println!("step {step:5} loss {loss:.4} ({:.1?})", t0.elapsed());
        }
    })?;
    println!("final loss {last:.4} after {:.1?}", t0.elapsed());
    let out = euler_sample(&model, &cond, x1.rows(), &model.flow, 7)?;
    let mae = out.normalized().zip_map(&x1, |a, b| (a - b).abs())?.mean();
    println!("per-bin MAE {mae:.4}");
    Ok(())
}
