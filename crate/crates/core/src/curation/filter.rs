use serde::{Deserialize, Serialize};

use super::SampleRecord;

pub const REASON_UNSCORED: &str = "unscored";
pub const REASON_UNREADABLE: &str = "read_error";

/// Joint acceptance criteria. `None` / `false` disables a criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    /// Keep only records with `pseudo_mos` strictly above this.
    pub min_pseudo_mos: Option<f64>,
    pub min_snr_db: Option<f64>,
    pub min_rolloff_hz: Option<f64>,
    pub require_speech: bool,
    pub reject_truncated: bool,
    pub reject_overlap: bool,
    pub reject_synthetic: bool,
    pub require_speaker_consistent: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            min_pseudo_mos: Some(3.5),
            ..Self::permissive()
        }
    }
}

impl FilterPolicy {
    /// No criteria at all.
    pub fn permissive() -> Self {
        Self {
            min_pseudo_mos: None,
            min_snr_db: None,
            min_rolloff_hz: None,
            require_speech: false,
            reject_truncated: false,
            reject_overlap: false,
            reject_synthetic: false,
            require_speaker_consistent: false,
        }
    }

    /// `None` when the record passes, otherwise the first failing reason.
    pub fn verdict(&self, r: &SampleRecord) -> Option<&'static str> {
        let t = &r.tags;
        if t.read_error.is_some() {
            return Some(REASON_UNREADABLE);
        }
        fn min(thresh: Option<f64>, v: Option<f64>, strict: bool, reason: &'static str) -> Option<&'static str> {
            let thresh = thresh?;
            match v {
                None => Some(REASON_UNSCORED),
                Some(v) if (strict && v > thresh) || (!strict && v >= thresh) => None,
                Some(_) => Some(reason),
            }
        }
        fn flag(enabled: bool, v: Option<bool>, bad: bool, reason: &'static str) -> Option<&'static str> {
            if !enabled {
                return None;
            }
            match v {
                None => Some(REASON_UNSCORED),
                Some(v) if v == bad => Some(reason),
                Some(_) => None,
            }
        }
        min(self.min_pseudo_mos, t.pseudo_mos, true, "low_mos")
            .or_else(|| min(self.min_snr_db, t.snr_db, false, "low_snr"))
            .or_else(|| min(self.min_rolloff_hz, t.rolloff_hz, false, "low_bandwidth"))
            .or_else(|| flag(self.require_speech, t.is_speech, false, "non_speech"))
            .or_else(|| flag(self.reject_truncated, t.truncated, true, "truncated"))
            .or_else(|| flag(self.reject_overlap, t.overlap, true, "overlap"))
            .or_else(|| flag(self.reject_synthetic, t.synthetic, true, "synthetic"))
            .or_else(|| flag(self.require_speaker_consistent, t.speaker_consistent, false, "speaker_inconsistent"))
    }
}

/// Marks every record kept or rejected; the output has the input's length
/// and order.
pub fn filter_manifest(records: &[SampleRecord], policy: &FilterPolicy) -> Vec<SampleRecord> {
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let reason = policy.verdict(&r);
            r.kept = Some(reason.is_none());
            r.reject_reason = reason.map(str::to_string);
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::QualityTags;
    use proptest::prelude::*;

    fn rec(id: usize, tags: QualityTags) -> SampleRecord {
        SampleRecord {
            id: format!("u{id}"),
            audio_path: format!("{id}.wav"),
            text: "hi".into(),
            speaker_id: "s".into(),
            lang: "zh".into(),
            emo: None,
            duration_s: 1.0,
            tags,
            kept: None,
            reject_reason: None,
        }
    }

    #[test]
    fn snr_threshold_only() {
        let p = FilterPolicy {
            min_snr_db: Some(15.0),
            ..FilterPolicy::permissive()
        };
        let r = rec(0, QualityTags { snr_db: Some(20.0), ..Default::default() });
        assert_eq!(filter_manifest(&[r], &p)[0].kept, Some(true));
    }

    #[test]
    fn mos_boundary_is_rejected() {
        let r = rec(0, QualityTags { pseudo_mos: Some(3.5), ..Default::default() });
        let out = filter_manifest(&[r], &FilterPolicy::default());
        assert_eq!(out[0].kept, Some(false));
        assert_eq!(out[0].reject_reason.as_deref(), Some("low_mos"));
    }

    #[test]
    fn unscored_is_rejected() {
        let out = filter_manifest(&[rec(0, QualityTags::default())], &FilterPolicy::default());
        assert_eq!(out[0].reject_reason.as_deref(), Some(REASON_UNSCORED));
    }

    fn arb_tags() -> impl Strategy<Value = QualityTags> {
        (
            proptest::option::of(1.0f64..5.0),
            proptest::option::of(any::<bool>()),
            proptest::option::of(-10.0f64..60.0),
            proptest::option::of(any::<bool>()),
        )
            .prop_map(|(pseudo_mos, is_speech, snr_db, truncated)| QualityTags {
                pseudo_mos,
                is_speech,
                snr_db,
                truncated,
                ..Default::default()
            })
    }

    proptest! {
        #[test]
        fn empty_policy_keeps_everything(tags in proptest::collection::vec(arb_tags(), 0..1000)) {
            let recs: Vec<_> = tags.into_iter().enumerate().map(|(i, t)| rec(i, t)).collect();
            let out = filter_manifest(&recs, &FilterPolicy::permissive());
            prop_assert_eq!(out.len(), recs.len());
            prop_assert!(out.iter().all(|r| r.kept == Some(true)));
        }

        #[test]
        fn filtering_commutes_with_permutation(
            tags in proptest::collection::vec(arb_tags(), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let recs: Vec<_> = tags.into_iter().enumerate().map(|(i, t)| rec(i, t)).collect();
            let policy = FilterPolicy { min_snr_db: Some(15.0), reject_truncated: true, ..FilterPolicy::default() };
            let mut perm: Vec<usize> = (0..recs.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<_> = perm.iter().map(|&i| recs[i].clone()).collect();
            let a = filter_manifest(&recs, &policy);
            let b = filter_manifest(&shuffled, &policy);
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(&b[j], &a[i]);
            }
        }
    }
}
