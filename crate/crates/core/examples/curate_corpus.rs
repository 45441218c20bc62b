//! Builds a synthetic corpus with a few clipped recordings and runs the
//! curation pipeline over it twice.
//!
//! cargo run --release --example curate_corpus -- [out_dir]

use pilot_tts::corpus::{make_corpus, CorpusSpec};
use pilot_tts::curation::{read_manifest, run_pipeline, FilterPolicy, ScorerSet};

fn main() -> pilot_tts::Result<()> {
    let tmp = tempfile::tempdir()?;
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let records = make_corpus(&dir, &CorpusSpec { truncated: 5, ..CorpusSpec::default() })?;
    println!("wrote {} records to {}", records.len(), dir.display());

    let policy = FilterPolicy { reject_truncated: true, require_speech: true, ..FilterPolicy::default() };
    let scorers = ScorerSet::builtin();
    let curated = dir.join("curated.jsonl");
    let summary = run_pipeline(dir.join("manifest.jsonl"), &curated, &policy, &scorers)?;
    println!("kept {}/{}, rejections {:?}", summary.kept, summary.total, summary.reasons);

    for r in read_manifest(&curated)?.iter().filter(|r| r.kept == Some(false)) {
        println!("  {} rejected: {}", r.id, r.reject_reason.as_deref().unwrap_or("?"));
    }
    let sample = &read_manifest(&curated)?[0];
    println!("tags of {}: {}", sample.id, serde_json::to_string(&sample.tags)?);

    // Curating an already curated manifest changes nothing.
    let again = run_pipeline(&curated, dir.join("curated2.jsonl"), &policy, &scorers)?;
    println!("second pass identical: {}", again == summary);
    Ok(())
}
