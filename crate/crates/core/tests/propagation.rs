use hsgcn::corpus::BipartiteGraph;
use hsgcn::hamming::{binarize, CodeMatrix};
use hsgcn::model::{hard_codes, propagate_matrix, ModelParams, NodeMask};
use hsgcn::Matrix;
use proptest::prelude::*;

fn graph_and_codes(max_side: usize, max_k: usize) -> impl Strategy<Value = (BipartiteGraph, Matrix<f64>)> {
    (1..=max_side, 1..=max_side, 1..=max_k).prop_flat_map(|(n, m, k)| {
        (
            proptest::collection::vec(any::<bool>(), n * m),
            proptest::collection::vec(-1.0f64..=1.0, (n + m) * k),
        )
            .prop_map(move |(adj, h)| {
                let edges: Vec<(u32, u32)> = (0..n * m)
                    .filter(|&e| adj[e])
                    .map(|e| ((e / m) as u32, (e % m) as u32))
                    .collect();
                let g = BipartiteGraph::from_edges(n, m, edges.iter().copied());
                (g, Matrix::from_vec(n + m, k, h).unwrap())
            })
    })
}

proptest! {
    #[test]
    fn output_stays_in_unit_box_and_keeps_magnitude((g, h) in graph_and_codes(8, 16)) {
        let codes = CodeMatrix::new(h.clone()).unwrap();
        let (next, _) = propagate_matrix(&codes, &g, None).unwrap();
        for (a, b) in next.as_slice().iter().zip(h.as_slice()) {
            prop_assert!(a.abs() <= 1.0);
            prop_assert!((a.abs() - b.abs()).abs() <= 1e-12 || a.abs() < b.abs());
        }
    }

    #[test]
    fn isolated_nodes_are_fixed((g, h) in graph_and_codes(8, 16)) {
        let codes = CodeMatrix::new(h.clone()).unwrap();
        let (next, _) = propagate_matrix(&codes, &g, None).unwrap();
        for n in (0..g.num_nodes()).filter(|&n| g.node_degree(n) == 0) {
            prop_assert_eq!(next.row(n), h.row(n));
        }
    }

    #[test]
    fn dropping_every_node_freezes_codes((g, h) in graph_and_codes(6, 8)) {
        let codes = CodeMatrix::new(h.clone()).unwrap();
        let all: Vec<usize> = (0..g.num_nodes()).collect();
        let mask = NodeMask::from_dropped(g.num_nodes(), &all);
        let (next, _) = propagate_matrix(&codes, &g, Some(&mask)).unwrap();
        prop_assert_eq!(next.as_slice(), h.as_slice());
    }

    #[test]
    fn hard_codes_are_binary((g, h) in graph_and_codes(6, 8)) {
        let n = g.num_users();
        let params = ModelParams::new(h, n, 1.0, 2).unwrap();
        let codes = hard_codes(&params, &g).unwrap();
        prop_assert!(codes.as_slice().iter().all(|&v| v == 1.0 || v == -1.0));
        let packed = binarize(&codes);
        let dense = packed.to_dense::<f64>();
        prop_assert_eq!(dense.as_slice(), codes.as_slice());
    }
}
