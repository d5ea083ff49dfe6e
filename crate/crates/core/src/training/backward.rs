use rayon::prelude::*;

use crate::corpus::BipartiteGraph;
use crate::error::{Error, Result};
use crate::hamming::{clamp_slope, refine_slope};
use crate::matrix::Matrix;
use crate::model::{ForwardTrace, ModelParams, NodeMask};
use crate::scalar::Scalar;

/// `(A + I)^T G` under the node mask. A dropped node contributed nothing
/// to its neighbors' sums, so it receives nothing back from them; its own
/// term always flows back.
fn scatter_back(g: &[f64], k: usize, graph: &BipartiteGraph, mask: Option<&NodeMask>) -> Vec<f64> {
    let mut out = vec![0.0f64; g.len()];
    out.par_chunks_mut(k.max(1)).enumerate().for_each(|(n, row)| {
        row.copy_from_slice(&g[n * k..(n + 1) * k]);
        if mask.is_some_and(|m| m.is_dropped(n)) {
            return;
        }
        for r in graph.node_neighbors(n) {
            for (o, &v) in row.iter_mut().zip(&g[r * k..(r + 1) * k]) {
                *o += v;
            }
        }
    });
    out
}

/// Gradient of the loss with respect to the embeddings, given the upstream
/// gradients at the final codes and (directly) at the initial codes.
pub fn backward<T: Scalar>(
    trace: &ForwardTrace<T>,
    graph: &BipartiteGraph,
    params: &ModelParams<T>,
    grad_final: &Matrix<T>,
    grad_initial: &Matrix<T>,
    lambda2: f64,
) -> Result<Matrix<T>> {
    let (rows, k) = (params.num_nodes(), params.width());
    let shape_ok = |m: &Matrix<T>| m.rows() == rows && m.cols() == k;
    if trace.depth() != params.layers()
        || !shape_ok(trace.final_codes())
        || !shape_ok(grad_final)
        || !shape_ok(grad_initial)
        || graph.num_nodes() != rows
    {
        return Err(Error::ShapeMismatch("trace, gradients and parameters disagree".into()));
    }

    let widen = |m: &Matrix<T>| -> Vec<f64> { m.as_slice().iter().map(|v| v.to_f64_lossless()).collect() };
    let mask = trace.node_mask.as_ref();
    let mut g = widen(grad_final);
    for l in (0..trace.depth()).rev() {
        let h = trace.codes[l].as_slice();
        let layer = &trace.layers[l];
        let (m, d, c, s) = (
            layer.m.as_slice(),
            layer.d.as_slice(),
            layer.c.as_slice(),
            layer.s.as_slice(),
        );
        // Direct paths to h, and the gradient at s.
        let mut g_h = vec![0.0f64; g.len()];
        let mut g_s = vec![0.0f64; g.len()];
        for x in 0..g.len() {
            let hv = h[x].to_f64_lossless();
            let g_c = g[x] * hv;
            let g_d = g_c * refine_slope(d[x]).to_f64_lossless();
            g_h[x] = g[x] * c[x].to_f64_lossless() + g_d * m[x].to_f64_lossless();
            g_s[x] = g_d * hv * clamp_slope(s[x]).to_f64_lossless();
        }
        let through_s = scatter_back(&g_s, k, graph, mask);
        for (a, b) in g_h.iter_mut().zip(&through_s) {
            *a += b;
        }
        g = g_h;
    }

    let beta = trace.beta.to_f64_lossless();
    let h0 = trace.initial().as_slice();
    let e = params.embeddings().as_slice();
    let out: Vec<T> = (0..g.len())
        .map(|x| {
            let h = h0[x].to_f64_lossless();
            let upstream = g[x] + grad_initial.as_slice()[x].to_f64_lossless();
            T::from_f64_round(upstream * beta * (1.0 - h * h) + 2.0 * lambda2 * e[x].to_f64_lossless())
        })
        .collect();
    Matrix::from_vec(rows, k, out)
}
