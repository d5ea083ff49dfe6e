use rand::Rng;

use super::BipartiteGraph;
use crate::error::{Error, Result};

/// A training example: the user prefers `pos_item` (a training edge) over
/// `neg_item` (not a training edge).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: u32,
    pub pos_item: u32,
    pub neg_item: u32,
}

/// Rejection attempts before falling back to enumerating the complement.
const MAX_REJECTIONS: usize = 64;

/// Draws `count` items uniformly from those `user` has no training edge with.
/// The same item may be drawn more than once.
pub fn sample_negatives<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    user: u32,
    count: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let m = graph.num_items();
    let row = graph.user_items(user);
    if row.len() >= m {
        return Err(Error::NoNegativeAvailable { user });
    }
    let mut out = Vec::with_capacity(count);
    let mut complement: Option<Vec<u32>> = None;
    for _ in 0..count {
        if let Some(c) = &complement {
            out.push(c[rng.gen_range(0..c.len())]);
            continue;
        }
        let mut drawn = None;
        for _ in 0..MAX_REJECTIONS {
            let j = rng.gen_range(0..m as u32);
            if row.binary_search(&j).is_err() {
                drawn = Some(j);
                break;
            }
        }
        match drawn {
            Some(j) => out.push(j),
            None => {
                // Dense row: sample from the explicit complement from here on.
                let c: Vec<u32> = (0..m as u32)
                    .filter(|j| row.binary_search(j).is_err())
                    .collect();
                out.push(c[rng.gen_range(0..c.len())]);
                complement = Some(c);
            }
        }
    }
    Ok(out)
}

/// Draws `batch_size` triplets: positives uniformly over training edges, one
/// negative each.
pub fn sample_triplets<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if graph.num_edges() == 0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    (0..batch_size)
        .map(|_| {
            let (user, pos_item) = graph.edge(rng.gen_range(0..graph.num_edges()));
            let neg_item = sample_negatives(graph, user, 1, rng)?[0];
            Ok(Triplet {
                user,
                pos_item,
                neg_item,
            })
        })
        .collect()
}
