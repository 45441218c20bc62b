use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curation::SampleRecord;
use crate::error::{Error, Result};
use crate::text::{is_dialect, MANDARIN};

#[derive(Clone, Debug, PartialEq)]
pub struct PairedExample {
    pub target: SampleRecord,
    pub reference: SampleRecord,
}

fn by_speaker(records: &[SampleRecord]) -> BTreeMap<&str, Vec<usize>> {
    let mut m: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        m.entry(r.speaker_id.as_str()).or_default().push(i);
    }
    m
}

/// Uniform target, reference uniform over the target speaker's other
/// utterances.
pub struct CrossSampler {
    records: Vec<SampleRecord>,
    /// Per record: indices of same-speaker records excluding itself.
    peers: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
}

impl CrossSampler {
    pub fn new(records: &[SampleRecord], seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("cross-sample pairing over an empty manifest".into()));
        }
        let groups = by_speaker(records);
        if let Some((spk, _)) = groups.iter().find(|(_, v)| v.len() < 2) {
            return Err(Error::Config(format!(
                "speaker `{spk}` has a single utterance; cross-sample pairing needs at least two"
            )));
        }
        let peers = records
            .iter()
            .enumerate()
            .map(|(i, r)| groups[r.speaker_id.as_str()].iter().copied().filter(|&j| j != i).collect())
            .collect();
        Ok(Self {
            records: records.to_vec(),
            peers,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Reference index for a fixed target index.
    pub fn reference_for(&mut self, target: usize) -> usize {
        let p = &self.peers[target];
        p[self.rng.random_range(0..p.len())]
    }

    pub fn draw_indices(&mut self) -> (usize, usize) {
        let t = self.rng.random_range(0..self.records.len());
        (t, self.reference_for(t))
    }
}

impl Iterator for CrossSampler {
    type Item = PairedExample;

    fn next(&mut self) -> Option<PairedExample> {
        let (t, r) = self.draw_indices();
        Some(PairedExample {
            target: self.records[t].clone(),
            reference: self.records[r].clone(),
        })
    }
}

/// Dialect targets with a reference that is Mandarin or dialect with equal
/// probability, always from the target's speaker.
pub struct MixedPromptSampler {
    records: Vec<SampleRecord>,
    /// `(target, mandarin pool, dialect pool without the target)`.
    targets: Vec<(usize, Vec<usize>, Vec<usize>)>,
    rng: ChaCha8Rng,
}

impl MixedPromptSampler {
    pub fn new(records: &[SampleRecord], seed: u64) -> Result<Self> {
        let groups = by_speaker(records);
        let mut targets = Vec::new();
        for (i, r) in records.iter().enumerate() {
            if !is_dialect(&r.lang) {
                continue;
            }
            let same = &groups[r.speaker_id.as_str()];
            let mandarin: Vec<usize> = same.iter().copied().filter(|&j| records[j].lang == MANDARIN).collect();
            let dialect: Vec<usize> = same
                .iter()
                .copied()
                .filter(|&j| j != i && is_dialect(&records[j].lang))
                .collect();
            if mandarin.is_empty() {
                return Err(Error::Config(format!(
                    "dialect speaker `{}` has no Mandarin parallel utterance",
                    r.speaker_id
                )));
            }
            if dialect.is_empty() {
                return Err(Error::Config(format!(
                    "dialect speaker `{}` needs a second dialect utterance to serve as reference",
                    r.speaker_id
                )));
            }
            targets.push((i, mandarin, dialect));
        }
        if targets.is_empty() {
            return Err(Error::Config("manifest has no dialect utterances".into()));
        }
        Ok(Self {
            records: records.to_vec(),
            targets,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn draw_indices(&mut self) -> (usize, usize) {
        let (t, man, dia) = &self.targets[self.rng.random_range(0..self.targets.len())];
        let pool = if self.rng.random_bool(0.5) { man } else { dia };
        (*t, pool[self.rng.random_range(0..pool.len())])
    }
}

impl Iterator for MixedPromptSampler {
    type Item = PairedExample;

    fn next(&mut self) -> Option<PairedExample> {
        let (t, r) = self.draw_indices();
        Some(PairedExample {
            target: self.records[t].clone(),
            reference: self.records[r].clone(),
        })
    }
}
