//! Reference encoders: frozen content and speaker featurizers (seeded random
//! projections) and the trainable Q-Former producing 32 condition tokens.

mod frozen;
mod qformer;

pub use frozen::{content_features, speaker_embed, ContentFeatures, Featurizer, SpeakerEmbedding, DEFAULT_FEATURIZER_SEED, D_FEAT, D_SPK, MIN_SPEAKER_AUDIO_S};
pub use qformer::{init_qformer, qformer_condition, qformer_forward, QFormerConfig, N_QUERIES};

use crate::numerics::Tensor;

/// Speaker embedding plus the Q-Former condition tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionBundle {
    pub s: SpeakerEmbedding,
    /// `N_QUERIES x d_model`.
    pub c: Tensor<f32>,
}
