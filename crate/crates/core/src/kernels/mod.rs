//! Forward-pass reference kernels of the part-guided generator.
//!
//! Row vectors throughout: a sequence of `n` tokens of width `d` is an `n x d`
//! matrix and a linear layer computes `x W + b` with `W` of shape `in x out`.
//! Nothing here trains; weights come from JSON files or from the seeded
//! initializer in [`layers::WeightInit`].

pub mod attention;
pub mod generation;
pub mod layers;
pub mod oracle;
pub mod ptg;
pub mod selftest;
pub mod vq;

pub use attention::{
    attention_weights, hpf, multi_head_attention, scaled_dot_attention, AttentionParams, HpfParams, KvProjection,
};
pub use generation::{
    fuse_guidance, generate_cycle, nll_loss, sequence_nll, total_loss, CycleConfig, CycleEvent, CycleInputs,
    CycleOutput, GuidanceUse, LossWeights, StepInput, TokenGenerator, PROB_FLOOR,
};
pub use layers::{gelu, softmax, Activation, Codebook, DenseLayer, DenseStack, WeightInit, WeightsFile};
pub use ptg::{aux_loss, diversity_loss, diversity_loss_from_similarities, part_gate, ptg_transform, DIVERSITY_TAU};
pub use vq::{
    chain_adjacency, gte_forward, lte_forward, normalize_adjacency, temporal_enhance, vq_losses, vq_quantize, VqLosses,
};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
