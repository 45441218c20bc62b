use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{filter_manifest, read_manifest, write_manifest, FilterPolicy, QualityTags, SampleRecord, ScorerSet};
use crate::audio::wav::read_wav;
use crate::error::Result;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub kept: usize,
    /// Rejection counts keyed by first failing criterion.
    pub reasons: BTreeMap<String, usize>,
}

impl Summary {
    pub fn of(records: &[SampleRecord]) -> Self {
        let mut s = Summary {
            total: records.len(),
            ..Default::default()
        };
        for r in records {
            if r.kept == Some(true) {
                s.kept += 1;
            } else {
                let reason = r.reject_reason.clone().unwrap_or_else(|| "unfiltered".into());
                *s.reasons.entry(reason).or_default() += 1;
            }
        }
        s
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24}{:>8}", "total", self.total)?;
        writeln!(f, "{:<24}{:>8}", "kept", self.kept)?;
        writeln!(f, "{:<24}{:>8}", "rejected", self.total - self.kept)?;
        for (reason, n) in &self.reasons {
            writeln!(f, "  {:<22}{:>8}", reason, n)?;
        }
        Ok(())
    }
}

pub fn resolve_audio_path(base: &Path, audio_path: &str) -> PathBuf {
    let p = Path::new(audio_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs every scorer on the record's audio (resolved against `base_dir`)
/// and merges their tags. Unreadable audio is tagged, not dropped.
pub fn annotate_sample(r: &SampleRecord, scorers: &ScorerSet, base_dir: &Path) -> SampleRecord {
    let mut out = r.clone();
    if scorers.is_empty() {
        return out;
    }
    let audio = match read_wav(resolve_audio_path(base_dir, &r.audio_path)) {
        Ok(a) => a,
        Err(e) => {
            out.tags.read_error = Some(e.to_string());
            return out;
        }
    };
    out.tags.read_error = None;
    for s in scorers.iter() {
        match s.score(r, &audio) {
            Ok(patch) => out.tags.merge(patch),
            Err(e) => out.tags.merge(QualityTags {
                read_error: Some(format!("{}: {e}", s.name())),
                ..Default::default()
            }),
        }
    }
    out
}

/// Annotate, filter and write the full tagged manifest.
///
/// Relative audio paths are resolved against the input manifest's folder.
/// When the output lives elsewhere they are rewritten as absolute so the
/// output stays self-contained.
pub fn run_pipeline(
    in_manifest: impl AsRef<Path>,
    out_manifest: impl AsRef<Path>,
    policy: &FilterPolicy,
    scorers: &ScorerSet,
) -> Result<Summary> {
    let (in_manifest, out_manifest) = (in_manifest.as_ref(), out_manifest.as_ref());
    let records = read_manifest(in_manifest)?;
    let base = in_manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let annotated: Vec<SampleRecord> = records
        .par_iter()
        .map(|r| annotate_sample(r, scorers, &base))
        .collect();
    let mut filtered = filter_manifest(&annotated, policy);
    let out_base = out_manifest.parent().unwrap_or(Path::new(""));
    if !out_base.as_os_str().is_empty() {
        std::fs::create_dir_all(out_base)?;
    }
    if !same_dir(&base, out_base) {
        let abs_base = std::fs::canonicalize(&base).unwrap_or(base.clone());
        for r in &mut filtered {
            r.audio_path = resolve_audio_path(&abs_base, &r.audio_path).to_string_lossy().into_owned();
        }
    }
    write_manifest(out_manifest, &filtered)?;
    Ok(Summary::of(&filtered))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    let canon = |p: &Path| {
        let p = if p.as_os_str().is_empty() { Path::new(".") } else { p };
        std::fs::canonicalize(p).ok()
    };
    a == b || (canon(a).is_some() && canon(a) == canon(b))
}
