//! Interaction logs: ingestion, k-core filtering, train/validation/test
//! splitting, the CSR bipartite graph and negative sampling.

mod graph;
mod kcore;
mod load;
mod sampling;
mod split;

use std::collections::HashMap;
use std::sync::Arc;

pub use graph::{build_graph, BipartiteGraph};
pub use kcore::k_core_filter;
pub use load::{load_interactions, Delimiter, LoadOptions};
pub use sampling::{sample_negatives, sample_triplets, Triplet};
pub use split::{
    split, Part, SourceInfo, SplitConfig, SplitDataset, SplitManifest, SplitStrategy, ASSIGNMENT_FILE,
    MANIFEST_FILE,
};

/// One implicit-feedback event between a user and an item, both densely indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    /// Seconds since epoch when the source carried one. Not used by the model.
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: u32, item: u32) -> Self {
        Self {
            user,
            item,
            timestamp: None,
        }
    }
}

/// Bijection between external string ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    dense: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the dense index for `id`, assigning the next free one on first sight.
    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&ix) = self.dense.get(id) {
            return ix;
        }
        let ix = self.external.len() as u32;
        self.external.push(id.to_owned());
        self.dense.insert(id.to_owned(), ix);
        ix
    }

    pub fn from_external(ids: Vec<String>) -> crate::Result<Self> {
        let mut dense = HashMap::with_capacity(ids.len());
        for (ix, id) in ids.iter().enumerate() {
            if dense.insert(id.clone(), ix as u32).is_some() {
                return Err(crate::Error::Format(format!("duplicate id {id:?}")));
            }
        }
        Ok(Self {
            external: ids,
            dense,
        })
    }

    pub fn dense(&self, id: &str) -> Option<u32> {
        self.dense.get(id).copied()
    }

    pub fn external(&self, ix: u32) -> &str {
        &self.external[ix as usize]
    }

    pub fn externals(&self) -> &[String] {
        &self.external
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }
}

/// User and item id tables shared by a dataset and all of its split views.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
}

/// De-duplicated, densely indexed interactions.
///
/// A dataset produced by loading or k-core filtering references every user
/// and item at least once. Split views share the parent's id maps, so a view
/// may leave some indices unreferenced.
#[derive(Debug, Clone)]
pub struct InteractionDataset {
    ids: Arc<IdMaps>,
    interactions: Vec<Interaction>,
}

impl InteractionDataset {
    pub fn new(ids: Arc<IdMaps>, interactions: Vec<Interaction>) -> crate::Result<Self> {
        let (n, m) = (ids.users.len() as u32, ids.items.len() as u32);
        if let Some(bad) = interactions.iter().find(|x| x.user >= n || x.item >= m) {
            return Err(crate::Error::InvalidArgument(format!(
                "interaction ({}, {}) outside {n} users x {m} items",
                bad.user, bad.item
            )));
        }
        Ok(Self { ids, interactions })
    }

    /// Builds a dataset from dense `(user, item)` pairs, naming ids by their index.
    /// Duplicates are dropped.
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(u32, u32)]) -> Self {
        let mut ids = IdMaps::default();
        for u in 0..num_users {
            ids.users.intern(&u.to_string());
        }
        for i in 0..num_items {
            ids.items.intern(&i.to_string());
        }
        let mut seen = std::collections::HashSet::with_capacity(pairs.len());
        let interactions = pairs
            .iter()
            .filter(|p| seen.insert(**p))
            .map(|&(u, i)| Interaction::new(u, i))
            .collect();
        Self::new(Arc::new(ids), interactions).expect("pairs within bounds")
    }

    pub fn num_users(&self) -> usize {
        self.ids.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.ids.items.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn ids(&self) -> &IdMaps {
        &self.ids
    }

    pub(crate) fn shared_ids(&self) -> Arc<IdMaps> {
        Arc::clone(&self.ids)
    }

    /// `interactions / (users * items)`.
    pub fn density(&self) -> f64 {
        let cells = self.num_users() as f64 * self.num_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.len() as f64 / cells
        }
    }

    /// Per-user item lists, each sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); self.num_users()];
        for x in &self.interactions {
            lists[x.user as usize].push(x.item);
        }
        for l in &mut lists {
            l.sort_unstable();
        }
        lists
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_users()];
        for x in &self.interactions {
            deg[x.user as usize] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_items()];
        for x in &self.interactions {
            deg[x.item as usize] += 1;
        }
        deg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_map_first_appearance_order() {
        let mut m = IdMap::new();
        assert_eq!(m.intern("b"), 0);
        assert_eq!(m.intern("a"), 1);
        assert_eq!(m.intern("b"), 0);
        assert_eq!(m.external(1), "a");
        assert_eq!(m.dense("a"), Some(1));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn duplicate_external_ids_rejected() {
        assert!(IdMap::from_external(vec!["x".into(), "x".into()]).is_err());
    }

    #[test]
    fn from_pairs_collapses_duplicates() {
        let ds = InteractionDataset::from_pairs(2, 2, &[(0, 0), (0, 0), (1, 1)]);
        assert_eq!(ds.len(), 2);
        assert!((ds.density() - 0.5).abs() < 1e-15);
    }
}
