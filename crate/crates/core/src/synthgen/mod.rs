//! Ground-truth sources, invertible mixing and factor-transition samplers.

mod mixing;
mod pairs;
mod sources;
mod transitions;

pub use mixing::{
    expanding_decoder, make_mixing_stack, mix, random_orthogonal, singular_values,
    smooth_leaky_relu, smooth_leaky_relu_deriv, smooth_leaky_relu_inv, MixLayer, MixingStack,
};
pub use pairs::{PairBatch, PAIR_MAGIC, PAIR_VERSION};
pub use sources::{
    sample_ar_sources, sample_chain, sample_pairs, sequence_pairs, ChainMode, SourceChainConfig,
    AR_BURN_IN, AR_COEFFICIENT,
};
pub use transitions::{
    lap_conditional, lap_next_index, lap_transition_sample, shuffle_per_factor,
    uni_transition_sample, FactorGrid, FactorPairs,
};
