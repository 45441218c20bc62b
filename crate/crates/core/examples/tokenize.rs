//! Trains the FSQ speech tokenizer briefly and inspects its output on one
//! utterance: token rate, code vectors and reconstruction error.
//!
//! cargo run --release --example tokenize -- [steps]

use pilot_tts::audio::wav::read_wav;
use pilot_tts::audio::{mel_spectrogram, MelConfig};
use pilot_tts::corpus::{make_corpus, CorpusSpec};
use pilot_tts::fsq::{index_to_code, FsqConfig, Tokenizer, TokenizerConfig};

fn main() -> pilot_tts::Result<()> {
    let steps = std::env::args().nth(1).map(|a| a.parse().expect("step count")).unwrap_or(200);
    let dir = tempfile::tempdir()?;
    let records = make_corpus(dir.path(), &CorpusSpec { n_speakers: 2, ..CorpusSpec::default() })?;
    let mels = records
        .iter()
        .map(|r| mel_spectrogram(&read_wav(dir.path().join(&r.audio_path))?, &MelConfig::default()))
        .collect::<pilot_tts::Result<Vec<_>>>()?;

    let mut tok = Tokenizer::new(TokenizerConfig::default(), 0);
    let loss = tok.train(&mels, steps, |step, l| {
        if step % 50 == 0 {
            println!("step {step:4} reconstruction loss {l:.4}");
        }
    })?;
    println!("final loss {loss:.4}");

    let w = read_wav(dir.path().join(&records[0].audio_path))?;
    let seq = tok.tokenize_audio(&w)?;
    println!("{:.2} s of audio -> {} tokens ({:.1} Hz)", w.duration_s(), seq.len(), seq.len() as f64 / w.duration_s());
    println!("first tokens: {:?}", &seq.ids[..seq.len().min(12)]);
    let fsq = FsqConfig::default();
    println!("token {} is code {:?}", seq.ids[0], index_to_code(seq.ids[0], &fsq)?.digits);

    let recon = tok.decode_tokens(&seq)?;
    let target = mel_spectrogram(&w, &MelConfig::default())?.normalized();
    let n = recon.rows().min(target.rows());
    let mae = recon.slice_rows(0, n)?.zip_map(&target.slice_rows(0, n)?, |a, b| (a - b).abs())?.mean();
    println!("decoded mel MAE {mae:.4} over {n} frames");
    Ok(())
}
