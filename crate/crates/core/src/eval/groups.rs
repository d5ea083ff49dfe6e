use serde::Serialize;

use crate::error::{Error, Result};

pub const NUM_GROUPS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparsityGroup {
    /// Members in ascending (degree, user) order.
    pub users: Vec<u32>,
    /// Smallest and largest training degree in the group; `None` when empty.
    pub degree_range: Option<(usize, usize)>,
    pub interaction_sum: usize,
}

/// Users split into four contiguous degree bands with near-equal total
/// training interactions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparsityGroups {
    pub groups: Vec<SparsityGroup>,
    pub total_interactions: usize,
    pub max_degree: usize,
}

impl SparsityGroups {
    /// Group index of `user`, if it was grouped.
    pub fn group_of(&self, user: u32) -> Option<usize> {
        self.groups.iter().position(|g| g.users.contains(&user))
    }

    /// Per-user group index, `None` for users outside the grouping.
    pub fn assignment(&self, num_users: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_users];
        for (g, group) in self.groups.iter().enumerate() {
            for &u in &group.users {
                out[u as usize] = Some(g);
            }
        }
        out
    }

    /// Degree upper bound of each non-empty group, the usual way to report the cuts.
    pub fn thresholds(&self) -> Vec<usize> {
        self.groups
            .iter()
            .filter_map(|g| g.degree_range.map(|(_, hi)| hi))
            .collect()
    }
}

/// Sorts `users` by training degree and cuts the sequence greedily: a
/// group closes as soon as the running interaction sum reaches the next
/// multiple of a quarter of the total. Trailing groups may be empty when a
/// few heavy users dominate.
///
/// Each group's sum lies within `max_degree` of a quarter of the total.
pub fn sparsity_groups(train_degrees: &[usize], users: &[u32]) -> Result<SparsityGroups> {
    if users.len() < NUM_GROUPS {
        return Err(Error::TooFewUsers {
            required: NUM_GROUPS,
            actual: users.len(),
        });
    }
    let mut order: Vec<(usize, u32)> = users
        .iter()
        .map(|&u| (train_degrees[u as usize], u))
        .collect();
    order.sort_unstable();
    order.dedup();
    let total: usize = order.iter().map(|&(d, _)| d).sum();
    let max_degree = order.last().map_or(0, |&(d, _)| d);

    let mut groups: Vec<SparsityGroup> = (0..NUM_GROUPS)
        .map(|_| SparsityGroup {
            users: Vec::new(),
            degree_range: None,
            interaction_sum: 0,
        })
        .collect();
    let mut current = 0;
    let mut cumulative = 0usize;
    for &(deg, u) in &order {
        let g = &mut groups[current];
        g.users.push(u);
        g.interaction_sum += deg;
        g.degree_range = Some(match g.degree_range {
            None => (deg, deg),
            Some((lo, _)) => (lo, deg),
        });
        cumulative += deg;
        if current + 1 < NUM_GROUPS && cumulative * NUM_GROUPS >= (current + 1) * total {
            current += 1;
        }
    }
    Ok(SparsityGroups {
        groups,
        total_interactions: total,
        max_degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_degrees_one_per_group() {
        let g = sparsity_groups(&[5, 5, 5, 5], &[0, 1, 2, 3]).unwrap();
        for (i, group) in g.groups.iter().enumerate() {
            assert_eq!(group.users, vec![i as u32]);
        }
    }

    #[test]
    fn heavy_tail_leaves_last_group_empty() {
        // Sum 8, quarter 2: cuts after cumulative 2, 4 and 8.
        let g = sparsity_groups(&[1, 1, 1, 1, 4], &[0, 1, 2, 3, 4]).unwrap();
        let sizes: Vec<_> = g.groups.iter().map(|x| x.users.clone()).collect();
        assert_eq!(sizes, vec![vec![0, 1], vec![2, 3], vec![4], vec![]]);
        let sums: Vec<_> = g.groups.iter().map(|x| x.interaction_sum).collect();
        assert_eq!(sums, vec![2, 2, 4, 0]);
        assert_eq!(g.thresholds(), vec![1, 1, 4]);
    }

    #[test]
    fn too_few_users() {
        assert!(matches!(
            sparsity_groups(&[1, 2, 3], &[0, 1, 2]),
            Err(Error::TooFewUsers { .. })
        ));
    }

    proptest! {
        #[test]
        fn sums_near_quarter(degrees in proptest::collection::vec(0usize..60, 4..80)) {
            let users: Vec<u32> = (0..degrees.len() as u32).collect();
            let g = sparsity_groups(&degrees, &users).unwrap();
            prop_assert_eq!(g.groups.len(), 4);
            let covered: usize = g.groups.iter().map(|x| x.users.len()).sum();
            prop_assert_eq!(covered, users.len());
            let quarter = g.total_interactions as f64 / 4.0;
            for grp in &g.groups {
                prop_assert!((grp.interaction_sum as f64 - quarter).abs() <= g.max_degree as f64);
            }
            // Bands are contiguous in degree.
            for w in g.groups.windows(2) {
                if let (Some((_, hi)), Some((lo, _))) = (w[0].degree_range, w[1].degree_range) {
                    prop_assert!(hi <= lo);
                }
            }
        }
    }
}
