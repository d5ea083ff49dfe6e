use rand::Rng;

use super::dropout::{apply_node_dropout, sample_bit_mask, BitMask, DropoutConfig, NodeMask};
use super::params::{initial_codes, ModelParams};
use super::propagate::{propagate_matrix, LayerTrace};
use crate::corpus::{BipartiteGraph, IdMaps};
use crate::error::{Error, Result};
use crate::hamming::{binarize, CodeFile, CodeMatrix, PackedCodes};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Everything one forward pass computed, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub beta: T,
    /// `H^(0) ..= H^(L)`.
    pub codes: Vec<CodeMatrix<T>>,
    /// One entry per layer `l = 0 .. L`.
    pub layers: Vec<LayerTrace<T>>,
    pub node_mask: Option<NodeMask>,
    pub bit_mask: Option<BitMask>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn initial(&self) -> &CodeMatrix<T> {
        &self.codes[0]
    }

    /// `H^(L)`.
    pub fn final_codes(&self) -> &CodeMatrix<T> {
        self.codes.last().expect("at least H^(0)")
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Final codes with dropped bits zeroed, as used for scoring in training.
    pub fn scoring_codes(&self) -> Matrix<T> {
        match &self.bit_mask {
            Some(mask) => mask.apply(self.final_codes()).expect("mask built for these codes"),
            None => self.final_codes().matrix().clone(),
        }
    }
}

/// Initial codes followed by `L` propagation layers. With dropout enabled a
/// fresh node mask (shared by all layers) and bit mask are drawn from `rng`.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    graph: &BipartiteGraph,
    dropout: &DropoutConfig,
    rng: &mut R,
) -> Result<ForwardTrace<T>> {
    dropout.validate()?;
    let (node_mask, bit_mask) = if dropout.enabled {
        let node = (dropout.node_ratio > 0.0)
            .then(|| apply_node_dropout(graph, dropout.node_ratio, rng))
            .transpose()?;
        let bit = (dropout.bit_ratio > 0.0)
            .then(|| sample_bit_mask(params.num_nodes(), params.width(), dropout.bit_ratio, rng))
            .transpose()?;
        (node, bit)
    } else {
        (None, None)
    };
    forward_with_masks(params, graph, node_mask, bit_mask)
}

/// Deterministic forward pass with explicit masks.
pub fn forward_with_masks<T: Scalar>(
    params: &ModelParams<T>,
    graph: &BipartiteGraph,
    node_mask: Option<NodeMask>,
    bit_mask: Option<BitMask>,
) -> Result<ForwardTrace<T>> {
    if params.num_users() != graph.num_users() || params.num_items() != graph.num_items() {
        return Err(Error::ShapeMismatch(format!(
            "params cover {}+{} nodes, graph {}+{}",
            params.num_users(),
            params.num_items(),
            graph.num_users(),
            graph.num_items()
        )));
    }
    let h0 = initial_codes(params)?;
    let (codes, layers) = propagate_layers(h0, graph, params.layers(), node_mask.as_ref())?;
    Ok(ForwardTrace {
        beta: params.beta(),
        codes,
        layers,
        node_mask,
        bit_mask,
    })
}

fn propagate_layers<T: Scalar>(
    h0: CodeMatrix<T>,
    graph: &BipartiteGraph,
    depth: usize,
    mask: Option<&NodeMask>,
) -> Result<(Vec<CodeMatrix<T>>, Vec<LayerTrace<T>>)> {
    let mut codes = vec![h0];
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let (next, trace) = propagate_matrix(codes.last().unwrap(), graph, mask)?;
        codes.push(next);
        layers.push(trace);
    }
    Ok((codes, layers))
}

/// Inner product of two codes, accumulated in `f64`.
pub fn predict<T: Scalar>(h_user: &[T], h_item: &[T]) -> Result<T> {
    if h_user.len() != h_item.len() {
        return Err(Error::WidthMismatch {
            expected: h_user.len(),
            actual: h_item.len(),
        });
    }
    Ok(T::from_f64_round(dot(h_user, h_item)))
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.to_f64_lossless() * y.to_f64_lossless())
        .sum()
}

/// Hard codes used at inference: `sign(E)` (zero counts as `+1`) propagated
/// through `L` layers, which keeps every entry in `{-1, +1}`.
pub fn hard_codes<T: Scalar>(params: &ModelParams<T>, graph: &BipartiteGraph) -> Result<CodeMatrix<T>> {
    params.check_finite()?;
    let signs = params
        .embeddings()
        .map(|e| if e >= T::zero() { T::one() } else { -T::one() });
    let (mut codes, _) =
        propagate_layers(CodeMatrix::from_matrix_unchecked(signs), graph, params.layers(), None)?;
    Ok(codes.pop().unwrap())
}

/// Packed inference codes for every user and item.
pub fn inference_codes<T: Scalar>(
    params: &ModelParams<T>,
    graph: &BipartiteGraph,
) -> Result<PackedCodes> {
    Ok(binarize(hard_codes(params, graph)?.matrix()))
}

/// Packed inference codes bundled with the id tables for export.
pub fn export_codes<T: Scalar>(
    params: &ModelParams<T>,
    graph: &BipartiteGraph,
    ids: &IdMaps,
) -> Result<CodeFile> {
    CodeFile::new(params.num_users(), inference_codes(params, graph)?, ids.clone())
}
