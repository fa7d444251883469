//! Learned probabilistic subsampling: trainable logits, hard sampling
//! without replacement, the softmax relaxation used for gradients, and
//! the fixed baseline patterns.

mod hard;
mod logits;
mod pattern;

pub use hard::{
    backward_logits, backward_logits_factored, sample_hard, sample_hard_per_sample,
    sample_hard_top_m, SelectionGrad, SoftSampleTape,
};
pub use logits::{
    entropy_penalty, mean_entropy, normalize_probs, LogitBank, SamplerMode, LOGIT_INIT_STD,
};
pub use pattern::{
    adjoint_apply, apply_pattern, fixed_pattern, project, Extent, FixedKind, SamplingPattern,
};
