//! Reference encoders on the synthetic corpus: speaker embeddings separate
//! speakers, content features follow the mel frame rate, and the Q-Former
//! compresses any reference into a fixed set of condition tokens.

use pilot_tts::audio::wav::read_wav;
use pilot_tts::conditioner::{init_qformer, qformer_condition, Featurizer, QFormerConfig, N_QUERIES};
use pilot_tts::corpus::{make_corpus, CorpusSpec};
use pilot_tts::numerics::ParamStore;
use rand::SeedableRng;

fn main() -> pilot_tts::Result<()> {
    let dir = tempfile::tempdir()?;
    let records = make_corpus(dir.path(), &CorpusSpec { n_speakers: 3, utts_per_speaker: 3, ..CorpusSpec::default() })?;
    let feat = Featurizer::default();
    let waves = records
        .iter()
        .map(|r| read_wav(dir.path().join(&r.audio_path)))
        .collect::<pilot_tts::Result<Vec<_>>>()?;
    let embeds = waves.iter().map(|w| feat.speaker_embed(w)).collect::<pilot_tts::Result<Vec<_>>>()?;

    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let c = embeds[i].cosine(&embeds[j]);
            if records[i].speaker_id == records[j].speaker_id { same.push(c) } else { diff.push(c) }
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("speaker cosine: same speaker {:.3}, different speakers {:.3}", avg(&same), avg(&diff));

    let cfg = QFormerConfig::default();
    let mut params = ParamStore::<f32>::new();
    init_qformer(&mut params, "qf", &cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    for (r, w) in records.iter().zip(&waves).step_by(3) {
        let content = feat.content_features(w)?;
        let bundle = qformer_condition(&content, &embeds[0], &params, "qf", &cfg)?;
        println!(
            "{}: {:.2} s -> {} content frames -> {} x {} condition tokens",
            r.id,
            w.duration_s(),
            content.frames(),
            bundle.c.rows(),
            bundle.c.cols()
        );
        assert_eq!(bundle.c.rows(), N_QUERIES);
    }
    Ok(())
}
