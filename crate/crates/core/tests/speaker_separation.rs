use pilot_tts::audio::wav::read_wav;
use pilot_tts::conditioner::speaker_embed;
use pilot_tts::corpus::{make_corpus, CorpusSpec};

#[test]
fn same_speaker_embeddings_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let recs = make_corpus(dir.path(), &CorpusSpec { n_speakers: 4, utts_per_speaker: 8, ..Default::default() }).unwrap();
    let embs: Vec<_> = recs
        .iter()
        .map(|r| speaker_embed(&read_wav(dir.path().join(&r.audio_path)).unwrap()).unwrap())
        .collect();
    let (mut same, mut cross) = (Vec::new(), Vec::new());
    for i in 0..recs.len() {
        for j in i + 1..recs.len() {
            let c = embs[i].cosine(&embs[j]);
            if recs[i].speaker_id == recs[j].speaker_id {
                same.push(c);
            } else {
                cross.push(c);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let min_same = same.iter().copied().fold(1.0, f64::min);
    eprintln!("same mean {:.3} min {:.3}, cross mean {:.3}", mean(&same), min_same, mean(&cross));
    assert!(min_same >= 0.9);
    assert!(mean(&same) - mean(&cross) >= 0.2);
}
