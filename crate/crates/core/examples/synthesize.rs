//! End-to-end run through the library's command layer: corpus, curation,
//! the three training stages at small sizes, then synthesis of a new
//! sentence in the voice of a reference recording.
//!
//! cargo run --release --example synthesize -- [out_dir]

use pilot_tts::cli::{cmd_corpus, cmd_curate, cmd_synth, cmd_train, ConfigMap, RunConfig, Stage, SynthRequest};

fn main() -> pilot_tts::Result<()> {
    let tmp = tempfile::tempdir()?;
    let work = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let mut map = ConfigMap::defaults();
    map.apply_str(&format!(
        "paths.work={}\nar.d_model=64\nar.blocks=2\nar.steps=800\ncfm.d_model=64\ncfm.blocks=2\ncfm.steps=800\ntokenizer.steps=200\n",
        work.display()
    ))?;
    let raw = RunConfig::from_map(map.clone())?;

    cmd_corpus(&raw)?;
    let curated = raw.corpus_manifest.with_file_name("curated.jsonl");
    let summary = cmd_curate(&raw, &raw.corpus_manifest, &curated)?;
    println!("curation kept {}/{}", summary.kept, summary.total);

    map.set("paths.corpus", &curated.display().to_string())?;
    let cfg = RunConfig::from_map(map)?;
    for stage in [Stage::Tokenizer, Stage::Ar, Stage::Cfm] {
        let r = cmd_train(&cfg, stage, None)?;
        println!("{:9} loss {:.4} -> {:.4}", stage.name(), r.initial_loss, r.final_loss);
    }

    let reference = cfg.corpus_manifest.with_file_name("wavs").join("spk02_utt003.wav");
    let req = SynthRequest {
        text: "nihao pengyou".into(),
        reference,
        lang: Some("zh".into()),
        emo: None,
        out_wav: work.join("out/hello.wav"),
        out_mel: work.join("out/hello.mel"),
    };
    let meta = cmd_synth(&cfg, &req)?;
    println!(
        "synthesised {} tokens -> {} mel frames, wav at {}{}",
        meta.tokens.len(),
        meta.frames,
        req.out_wav.display(),
        if meta.truncated { " (hit max_tokens)" } else { "" }
    );
    Ok(())
}
