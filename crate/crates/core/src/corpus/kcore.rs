use std::collections::VecDeque;
use std::sync::Arc;

use super::{IdMaps, Interaction, InteractionDataset};

/// Peels users and items with fewer than `k` interactions until every
/// survivor has at least `k`, then re-indexes densely.
///
/// Surviving ids keep their relative first-appearance order. The result may
/// be empty. `k = 0` and `k = 1` return the dataset unchanged.
pub fn k_core_filter(ds: &InteractionDataset, k: usize) -> InteractionDataset {
    let n = ds.num_users();
    let m = ds.num_items();
    let edges = ds.interactions();

    // Incidence lists of edge indices; node ids are users then items.
    let mut incident: Vec<Vec<u32>> = vec![Vec::new(); n + m];
    for (e, x) in edges.iter().enumerate() {
        incident[x.user as usize].push(e as u32);
        incident[n + x.item as usize].push(e as u32);
    }
    let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
    let mut removed_node = vec![false; n + m];
    let mut removed_edge = vec![false; edges.len()];

    let mut queue: VecDeque<usize> = (0..n + m).filter(|&v| degree[v] < k).collect();
    for &v in &queue {
        removed_node[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &e in &incident[v] {
            let e = e as usize;
            if removed_edge[e] {
                continue;
            }
            removed_edge[e] = true;
            let x = edges[e];
            let other = if v < n {
                n + x.item as usize
            } else {
                x.user as usize
            };
            degree[other] -= 1;
            degree[v] -= 1;
            if !removed_node[other] && degree[other] < k {
                removed_node[other] = true;
                queue.push_back(other);
            }
        }
    }

    let mut ids = IdMaps::default();
    let mut kept = Vec::new();
    for (e, x) in edges.iter().enumerate() {
        if removed_edge[e] {
            continue;
        }
        let u = ids.users.intern(ds.ids().users.external(x.user));
        let i = ids.items.intern(ds.ids().items.external(x.item));
        kept.push(Interaction {
            user: u,
            item: i,
            timestamp: x.timestamp,
        });
    }
    InteractionDataset::new(Arc::new(ids), kept).expect("re-indexed within bounds")
}
