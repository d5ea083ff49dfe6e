use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BipartiteGraph;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Training-time regularization. Ignored at inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutConfig {
    /// Fraction of nodes whose codes are withheld from their neighbors'
    /// aggregation during one forward pass.
    pub node_ratio: f64,
    /// Probability of zeroing each bit of the final codes before scoring.
    pub bit_ratio: f64,
    pub enabled: bool,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            node_ratio: 0.0,
            bit_ratio: 0.0,
            enabled: false,
        }
    }
}

impl DropoutConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("node", self.node_ratio), ("bit", self.bit_ratio)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} dropout ratio {p} not in [0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Nodes withheld from aggregation as neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask {
    dropped: Vec<bool>,
    count: usize,
}

impl NodeMask {
    pub fn keep_all(nodes: usize) -> Self {
        Self {
            dropped: vec![false; nodes],
            count: 0,
        }
    }

    pub fn from_dropped(nodes: usize, dropped: &[usize]) -> Self {
        let mut mask = Self::keep_all(nodes);
        for &n in dropped {
            if !mask.dropped[n] {
                mask.dropped[n] = true;
                mask.count += 1;
            }
        }
        mask
    }

    #[inline]
    pub fn is_dropped(&self, node: usize) -> bool {
        self.dropped[node]
    }

    pub fn dropped_count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.dropped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
    }
}

/// Drops exactly `floor(p1 * (N + M))` nodes chosen uniformly without
/// replacement. A dropped node still updates itself from its own
/// neighbors; it only stops contributing to theirs.
pub fn apply_node_dropout<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    p1: f64,
    rng: &mut R,
) -> Result<NodeMask> {
    if !(0.0..1.0).contains(&p1) {
        return Err(Error::InvalidArgument(format!("node dropout {p1} not in [0, 1)")));
    }
    let nodes = graph.num_nodes();
    let count = (p1 * nodes as f64).floor() as usize;
    let picked = rand::seq::index::sample(rng, nodes, count);
    Ok(NodeMask::from_dropped(nodes, &picked.into_vec()))
}

/// Per-entry keep flags for the final codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl BitMask {
    pub fn keep_all(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            keep: vec![true; rows * cols],
        }
    }

    pub fn from_keep(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != rows * cols {
            return Err(Error::ShapeMismatch("bit mask length".into()));
        }
        Ok(Self { rows, cols, keep })
    }

    #[inline]
    pub fn kept(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.cols + c]
    }

    pub fn kept_fraction(&self) -> f64 {
        if self.keep.is_empty() {
            return 1.0;
        }
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }

    /// Zeroes dropped entries; no rescaling of the kept ones.
    pub fn apply<T: Scalar>(&self, codes: &Matrix<T>) -> Result<Matrix<T>> {
        if codes.rows() != self.rows || codes.cols() != self.cols {
            return Err(Error::ShapeMismatch("bit mask vs codes".into()));
        }
        let mut out = codes.clone();
        for (v, &k) in out.as_mut_slice().iter_mut().zip(&self.keep) {
            if !k {
                *v = T::zero();
            }
        }
        Ok(out)
    }

    pub(crate) fn apply_in_place<T: Scalar>(&self, grad: &mut Matrix<T>) {
        for (v, &k) in grad.as_mut_slice().iter_mut().zip(&self.keep) {
            if !k {
                *v = T::zero();
            }
        }
    }
}

/// Zeroes each bit independently with probability `p2`. Returns the masked
/// codes and the mask so gradients can be routed through it.
pub fn apply_bit_dropout<T: Scalar, R: Rng + ?Sized>(
    codes: &Matrix<T>,
    p2: f64,
    rng: &mut R,
) -> Result<(Matrix<T>, BitMask)> {
    let mask = sample_bit_mask(codes.rows(), codes.cols(), p2, rng)?;
    Ok((mask.apply(codes)?, mask))
}

pub(crate) fn sample_bit_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    p2: f64,
    rng: &mut R,
) -> Result<BitMask> {
    if !(0.0..1.0).contains(&p2) {
        return Err(Error::InvalidArgument(format!("bit dropout {p2} not in [0, 1)")));
    }
    let keep = if p2 == 0.0 {
        vec![true; rows * cols]
    } else {
        (0..rows * cols).map(|_| !rng.gen_bool(p2)).collect()
    };
    BitMask::from_keep(rows, cols, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_graph, InteractionDataset};
    use crate::hamming::CodeMatrix;
    use crate::model::propagate_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph() -> BipartiteGraph {
        let pairs: Vec<(u32, u32)> = (0..6).flat_map(|u| (0..4).map(move |i| (u, i))).filter(|p| (p.0 + p.1) % 2 == 0).collect();
        build_graph(&InteractionDataset::from_pairs(6, 4, &pairs))
    }

    #[test]
    fn zero_ratio_keeps_everything() {
        let g = graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(apply_node_dropout(&g, 0.0, &mut rng).unwrap().dropped_count(), 0);
        let codes = Matrix::filled(3, 5, 0.7f64);
        let (out, mask) = apply_bit_dropout(&codes, 0.0, &mut rng).unwrap();
        assert_eq!(out, codes);
        assert_eq!(mask.kept_fraction(), 1.0);
    }

    #[test]
    fn dropped_count_is_floor() {
        let g = graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for p in [0.05, 0.1, 0.35, 0.99] {
            let mask = apply_node_dropout(&g, p, &mut rng).unwrap();
            assert_eq!(mask.dropped_count(), (p * 10.0f64).floor() as usize);
        }
        assert!(apply_node_dropout(&g, 1.0, &mut rng).is_err());
    }

    #[test]
    fn dropping_all_neighbors_gives_identity_update() {
        let g = graph();
        // User 0's neighbors are items 0 and 2, nodes 6 and 8.
        let mask = NodeMask::from_dropped(10, &[6, 8]);
        let h = CodeMatrix::new(Matrix::from_fn(10, 3, |r, c| if (r + c) % 3 == 0 { -1.0 } else { 1.0f64 })).unwrap();
        let (next, _) = propagate_matrix(&h, &g, Some(&mask)).unwrap();
        assert_eq!(next.row(0), h.row(0));
    }

    #[test]
    fn all_bits_dropped_scores_zero() {
        let codes = Matrix::filled(2, 4, 1.0f64);
        let mask = BitMask::from_keep(2, 4, vec![false; 8]).unwrap();
        let out = mask.apply(&codes).unwrap();
        let score: f64 = out.row(0).iter().zip(out.row(1)).map(|(a, b)| a * b).sum();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn kept_fraction_monte_carlo() {
        let p2 = 0.2;
        let (rows, cols) = (200, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let codes = Matrix::filled(rows, cols, 1.0f64);
        let (_, mask) = apply_bit_dropout(&codes, p2, &mut rng).unwrap();
        let n = (rows * cols) as f64;
        let sigma = ((1.0 - p2) * p2 / n).sqrt();
        assert!((mask.kept_fraction() - (1.0 - p2)).abs() < 3.0 * sigma);
    }
}
