use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::SampleRecord;
use crate::error::{Error, Result};

/// Parses a JSON Lines manifest. Blank lines are skipped; ids must be unique.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out: Vec<SampleRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !(rec.duration_s > 0.0) {
            return Err(parse_err(format!("duration_s must be positive, got {}", rec.duration_s)));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(parse_err(format!("duplicate id `{}`", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
