//! Autoregressive text-to-semantic model: vocabulary, sequence assembly,
//! teacher-forced training and sampling.

mod model;
mod sequence;
pub mod vocab;

pub use model::{
    all_logits, decoder_block, embed, init_params, logits_at, sample_class, schedule, teacher_forced_loss, trunk,
    ArConfig, ArMeta, ArModel, Generation, SamplingConfig,
};
pub use sequence::{assemble, assemble_sequence, resolve_tags, ArInput, Condition, Variant};
pub use vocab::{build_vocab, Vocab};

/// Sequence layout for an ablation mode.
pub fn ablation_variant(mode: Variant, base: &ArConfig) -> ArConfig {
    ArConfig {
        variant: mode,
        ..base.clone()
    }
}
