use super::InteractionDataset;

/// Training interactions as a bipartite graph in CSR form, stored in both
/// directions. Neighbor lists are sorted ascending.
///
/// Nodes are addressed two ways: per side (`user u`, `item j`) or in the
/// unified layout shared with code matrices, where node `u < N` is user `u`
/// and node `N + j` is item `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    num_users: usize,
    num_items: usize,
    user_offsets: Vec<usize>,
    user_neighbors: Vec<u32>,
    item_offsets: Vec<usize>,
    item_neighbors: Vec<u32>,
}

fn csr(rows: usize, edges: impl Iterator<Item = (u32, u32)> + Clone) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; rows + 1];
    for (r, _) in edges.clone() {
        offsets[r as usize + 1] += 1;
    }
    for r in 0..rows {
        offsets[r + 1] += offsets[r];
    }
    let mut fill = offsets.clone();
    let mut neighbors = vec![0u32; offsets[rows]];
    for (r, c) in edges {
        neighbors[fill[r as usize]] = c;
        fill[r as usize] += 1;
    }
    for r in 0..rows {
        neighbors[offsets[r]..offsets[r + 1]].sort_unstable();
    }
    (offsets, neighbors)
}

/// Builds both CSR directions from the training interactions.
pub fn build_graph(train: &InteractionDataset) -> BipartiteGraph {
    BipartiteGraph::from_edges(
        train.num_users(),
        train.num_items(),
        train.interactions().iter().map(|x| (x.user, x.item)),
    )
}

impl BipartiteGraph {
    /// Edges must be distinct `(user, item)` pairs.
    pub fn from_edges(
        num_users: usize,
        num_items: usize,
        edges: impl Iterator<Item = (u32, u32)> + Clone,
    ) -> Self {
        let (user_offsets, user_neighbors) = csr(num_users, edges.clone());
        let (item_offsets, item_neighbors) = csr(num_items, edges.map(|(u, i)| (i, u)));
        Self {
            num_users,
            num_items,
            user_offsets,
            user_neighbors,
            item_offsets,
            item_neighbors,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Undirected edge count, i.e. training interactions.
    pub fn num_edges(&self) -> usize {
        self.user_neighbors.len()
    }

    /// Directed CSR entries over both directions.
    pub fn num_directed_edges(&self) -> usize {
        self.user_neighbors.len() + self.item_neighbors.len()
    }

    pub fn user_items(&self, user: u32) -> &[u32] {
        let u = user as usize;
        &self.user_neighbors[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn item_users(&self, item: u32) -> &[u32] {
        let i = item as usize;
        &self.item_neighbors[self.item_offsets[i]..self.item_offsets[i + 1]]
    }

    pub fn user_degree(&self, user: u32) -> usize {
        self.user_items(user).len()
    }

    pub fn item_degree(&self, item: u32) -> usize {
        self.item_users(item).len()
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.user_items(user).binary_search(&item).is_ok()
    }

    /// Neighbors of a unified-layout node, themselves in unified layout.
    pub fn node_neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.num_users;
        let (list, shift) = if node < n {
            (self.user_items(node as u32), n)
        } else {
            (self.item_users((node - n) as u32), 0)
        };
        list.iter().map(move |&x| x as usize + shift)
    }

    pub fn node_degree(&self, node: usize) -> usize {
        if node < self.num_users {
            self.user_degree(node as u32)
        } else {
            self.item_degree((node - self.num_users) as u32)
        }
    }

    /// The `k`-th undirected edge in user-major order.
    pub fn edge(&self, k: usize) -> (u32, u32) {
        let user = self.user_offsets.partition_point(|&o| o <= k) - 1;
        (user as u32, self.user_neighbors[k])
    }

    /// All edges in user-major order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users).flat_map(move |u| self.user_items(u as u32).iter().map(move |&i| (u as u32, i)))
    }

    pub fn user_offsets(&self) -> &[usize] {
        &self.user_offsets
    }

    pub fn item_offsets(&self) -> &[usize] {
        &self.item_offsets
    }
}
