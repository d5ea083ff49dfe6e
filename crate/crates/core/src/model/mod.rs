//! Forward computation: relaxed initial codes, stacked Hamming-space
//! propagation layers, dropout and inner-product scoring.

mod dropout;
mod forward;
mod params;
mod propagate;

pub use dropout::{apply_bit_dropout, apply_node_dropout, BitMask, DropoutConfig, NodeMask};
pub use forward::{
    export_codes, forward, forward_with_masks, hard_codes, inference_codes, predict, ForwardTrace,
};
pub(crate) use forward::dot;
pub use params::{initial_codes, xavier_bound, ModelParams};
pub use propagate::{propagate_matrix, propagate_node, LayerTrace, NodeStep};
