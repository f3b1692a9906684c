//! Cross-attention layers that treat queries as cluster centers.
//!
//! [`vanilla_cross_attention`] normalises each query's scores over pixels;
//! [`cluster_softmax_attention`] normalises each pixel's scores over queries,
//! which makes one layer a single soft clustering step.
//! [`recurrent_cross_attention`] repeats that step with shared weights, and
//! [`decoder_stack`] chains such layers over a feature pyramid.

mod decoder;
pub mod flops;
mod gradient;
mod layers;
mod params;
mod recurrent;

pub use decoder::{decoder_stack, random_decoder, DecoderConfig, DecoderLayer, DecoderOutput};
pub use flops::{extra_params, flop_count, flop_count_heads, Variant};
pub use gradient::{rca_gradient, RcaGradients};
pub use layers::{
    cluster_softmax_attention, cluster_softmax_attention_with_stats, hard_assignment_attention,
    hard_assignment_attention_with_stats, vanilla_cross_attention, vanilla_cross_attention_with_stats,
    AttentionStats,
};
pub use params::AttentionParams;
pub use recurrent::{
    clustering_assignment, recurrent_clustering, recurrent_cross_attention, stacked_unshared_attention,
    stacked_unshared_queries, LayerTrace, Similarity,
};
