use pilot_tts::cfm::{euler_sample, DecoderCondition, DitConfig, DitLite, FlowPathConfig};
use pilot_tts::conditioner::Featurizer;
use pilot_tts::corpus::{make_corpus, CorpusSpec};
use pilot_tts::dataset::{load_utterances, Utterance};
use pilot_tts::fsq::{Tokenizer, TokenizerConfig};
use pilot_tts::numerics::Tensor;

fn utterances(n_speakers: usize) -> Vec<Utterance> {
    let dir = tempfile::tempdir().unwrap();
    let records = make_corpus(dir.path(), &CorpusSpec { n_speakers, utts_per_speaker: 2, ..CorpusSpec::default() }).unwrap();
    load_utterances(&records, dir.path(), &Tokenizer::new(TokenizerConfig::default(), 0), &Featurizer::default()).unwrap()
}

fn item(target: &Utterance, reference: &Utterance) -> (DecoderCondition, Tensor<f32>) {
    let cond = DecoderCondition { m_ref: reference.mel.clone(), s: reference.s.clone(), tgt_tokens: target.tokens.clone() };
    (cond, target.mel.normalized())
}

fn mae(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
    let n = a.rows().min(b.rows());
    a.slice_rows(0, n).unwrap().zip_map(&b.slice_rows(0, n).unwrap(), |x, y| (x - y).abs()).unwrap().mean() as f64
}

#[test]
fn fixed_seed_loss_falls_during_overfit() {
    let utts = utterances(1);
    let batch = vec![item(&utts[0], &utts[1]); 4];
    let mut model = DitLite::new(DitConfig::with_dims(32, 2, 1), FlowPathConfig::default(), 0);
    let mut losses = vec![model.eval_loss(&batch, 77).unwrap()];
    model
        .train_observed(100, |_| Ok(batch.clone()), |_, _, m| losses.push(m.eval_loss(&batch, 77).unwrap()))
        .unwrap();
    let rises = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises <= 5, "{rises} rises: {losses:?}");
    assert!(losses[100] < 0.5 * losses[0]);
}

#[test]
fn output_follows_the_target_tokens() {
    let utts = utterances(2);
    let (a, b) = (&utts[0], &utts[3]);
    let items = vec![item(a, &utts[1]), item(b, &utts[2])];
    let mut model = DitLite::new(DitConfig::with_dims(48, 4, 2), FlowPathConfig::default(), 1);
    model.train(800, |_| Ok(items.clone()), |_, _| {}).unwrap();

    // Condition of item A with the tokens of item B.
    let mut swapped = items[0].0.clone();
    swapped.tgt_tokens = b.tokens.clone();
    let out = euler_sample(&model, &swapped, swapped.frames(), &model.flow, 3).unwrap().normalized();
    let (to_b, to_a) = (mae(&out, &items[1].1), mae(&out, &items[0].1));
    assert!(to_b < to_a, "MAE to swapped target {to_b:.3}, to original {to_a:.3}");
}
