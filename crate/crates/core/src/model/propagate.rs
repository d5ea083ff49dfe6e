use rayon::prelude::*;

use super::dropout::NodeMask;
use crate::corpus::BipartiteGraph;
use crate::error::{Error, Result};
use crate::hamming::{clamp, refine, CodeMatrix};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Intermediate vectors of one node's update.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStep<T> {
    /// Self plus neighbor sum.
    pub s: Vec<T>,
    /// Per-bit dominant sign, `clamp(s)`.
    pub m: Vec<T>,
    /// Agreement of the node with its neighborhood, `h ⊙ m`.
    pub d: Vec<T>,
    /// Refinement factor, `refine(d)`.
    pub c: Vec<T>,
    pub h_next: Vec<T>,
}

/// Cached tensors of one propagation layer, all `(N + M) x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub s: Matrix<T>,
    pub m: Matrix<T>,
    pub d: Matrix<T>,
    pub c: Matrix<T>,
}

#[inline]
fn encode<T: Scalar>(s: T, h: T) -> (T, T, T, T) {
    let m = clamp(s);
    let d = h * m;
    let c = refine(d);
    (m, d, c, c * h)
}

/// Updates a single node from its own code and its neighbors' codes.
///
/// The neighbor sum is accumulated in `f64` in the order given, starting
/// from the node's own code.
pub fn propagate_node<T: Scalar>(h_self: &[T], neighbor_codes: &[&[T]]) -> Result<NodeStep<T>> {
    let k = h_self.len();
    if let Some(bad) = neighbor_codes.iter().find(|n| n.len() != k) {
        return Err(Error::WidthMismatch {
            expected: k,
            actual: bad.len(),
        });
    }
    let mut step = NodeStep {
        s: Vec::with_capacity(k),
        m: Vec::with_capacity(k),
        d: Vec::with_capacity(k),
        c: Vec::with_capacity(k),
        h_next: Vec::with_capacity(k),
    };
    for b in 0..k {
        let mut acc = h_self[b].to_f64_lossless();
        for n in neighbor_codes {
            acc += n[b].to_f64_lossless();
        }
        let s = T::from_f64_round(acc);
        let (m, d, c, h) = encode(s, h_self[b]);
        step.s.push(s);
        step.m.push(m);
        step.d.push(d);
        step.c.push(c);
        step.h_next.push(h);
    }
    Ok(step)
}

/// Computes `(A + I) H` row by row from the CSR lists, skipping neighbors
/// dropped by `mask`. A node's own term is always kept.
pub(crate) fn aggregate<T: Scalar>(
    h: &Matrix<T>,
    graph: &BipartiteGraph,
    mask: Option<&NodeMask>,
) -> Matrix<T> {
    let k = h.cols();
    let mut s = Matrix::zeros(h.rows(), k);
    s.as_mut_slice()
        .par_chunks_mut(k.max(1))
        .enumerate()
        .for_each_init(
            || vec![0.0f64; k],
            |acc, (r, out)| {
                for (a, &v) in acc.iter_mut().zip(h.row(r)) {
                    *a = v.to_f64_lossless();
                }
                for n in graph.node_neighbors(r) {
                    if mask.is_some_and(|m| m.is_dropped(n)) {
                        continue;
                    }
                    for (a, &v) in acc.iter_mut().zip(h.row(n)) {
                        *a += v.to_f64_lossless();
                    }
                }
                for (o, &a) in out.iter_mut().zip(acc.iter()) {
                    *o = T::from_f64_round(a);
                }
            },
        );
    s
}

/// One layer in matrix form:
/// `H' = (-ReLU(-2 clamp((A + I) H) ⊙ H) + 1) ⊙ H`.
///
/// Agrees exactly with [`propagate_node`] applied to every row with
/// neighbors in ascending order.
pub fn propagate_matrix<T: Scalar>(
    h: &CodeMatrix<T>,
    graph: &BipartiteGraph,
    mask: Option<&NodeMask>,
) -> Result<(CodeMatrix<T>, LayerTrace<T>)> {
    if h.rows() != graph.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "{} code rows for a graph with {} nodes",
            h.rows(),
            graph.num_nodes()
        )));
    }
    if let Some(m) = mask {
        if m.len() != graph.num_nodes() {
            return Err(Error::ShapeMismatch("node mask length".into()));
        }
    }
    let s = aggregate(h.matrix(), graph, mask);
    let (rows, k) = (h.rows(), h.cols());
    let mut m = Matrix::zeros(rows, k);
    let mut d = Matrix::zeros(rows, k);
    let mut c = Matrix::zeros(rows, k);
    let mut next = Matrix::zeros(rows, k);
    let hs = h.as_slice();
    for (i, &sv) in s.as_slice().iter().enumerate() {
        let (mv, dv, cv, hv) = encode(sv, hs[i]);
        m.as_mut_slice()[i] = mv;
        d.as_mut_slice()[i] = dv;
        c.as_mut_slice()[i] = cv;
        next.as_mut_slice()[i] = hv;
    }
    Ok((
        CodeMatrix::from_matrix_unchecked(next),
        LayerTrace { s, m, d, c },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_graph, InteractionDataset};

    #[test]
    fn minority_bit_flips() {
        let step = propagate_node(&[-1.0f64, 1.0], &[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert_eq!(step.s, vec![1.0, 1.0]);
        assert_eq!(step.m, vec![1.0, 1.0]);
        assert_eq!(step.d, vec![-1.0, 1.0]);
        assert_eq!(step.c, vec![-1.0, 1.0]);
        assert_eq!(step.h_next, vec![1.0, 1.0]);
    }

    #[test]
    fn majority_bit_retained() {
        let step = propagate_node(&[1.0f64], &[&[1.0], &[-1.0]]).unwrap();
        assert_eq!(
            (step.s[0], step.m[0], step.d[0], step.c[0], step.h_next[0]),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn tie_keeps_bit() {
        let step = propagate_node(&[1.0f64], &[&[-1.0]]).unwrap();
        assert_eq!(
            (step.s[0], step.m[0], step.d[0], step.c[0], step.h_next[0]),
            (0.0, 0.0, 0.0, 1.0, 1.0)
        );
    }

    #[test]
    fn isolated_node_is_fixed_point() {
        let h = [0.3f64, -0.8, 1.0];
        let step = propagate_node(&h, &[]).unwrap();
        assert_eq!(step.s, h.to_vec());
        assert_eq!(step.c, vec![1.0; 3]);
        assert_eq!(step.h_next, h.to_vec());
    }

    #[test]
    fn width_mismatch() {
        assert!(matches!(
            propagate_node(&[1.0f64, 1.0], &[&[1.0]]),
            Err(Error::WidthMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn empty_graph_is_identity() {
        let g = BipartiteGraph::from_edges(2, 3, std::iter::empty());
        let h = CodeMatrix::new(Matrix::from_fn(5, 4, |r, c| ((r * 4 + c) as f64 / 10.0) - 1.0)).unwrap();
        let (next, trace) = propagate_matrix(&h, &g, None).unwrap();
        assert_eq!(next, h);
        assert_eq!(trace.m, *h.matrix());
        assert!(trace.d.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn toy_graph_matches_node_form() {
        let ds = InteractionDataset::from_pairs(2, 2, &[(0, 0), (0, 1), (1, 1)]);
        let g = build_graph(&ds);
        let h = CodeMatrix::new(Matrix::from_vec(4, 2, vec![0.9, -0.2, -0.7, 0.4, 0.1, 0.6, -0.5, -0.9]).unwrap()).unwrap();
        let (next, trace) = propagate_matrix(&h, &g, None).unwrap();
        for r in 0..4 {
            let nbrs: Vec<&[f64]> = g.node_neighbors(r).map(|n| h.row(n)).collect();
            let step = propagate_node(h.row(r), &nbrs).unwrap();
            assert_eq!(next.row(r), &step.h_next[..]);
            assert_eq!(trace.s.row(r), &step.s[..]);
            assert_eq!(trace.c.row(r), &step.c[..]);
        }
    }

    #[test]
    fn works_in_f32() {
        let step = propagate_node(&[-1.0f32, 1.0], &[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        assert_eq!(step.h_next, vec![1.0f32, 1.0]);
    }
}
