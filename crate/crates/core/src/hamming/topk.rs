use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::codes::{similarity_unchecked, PackedView};
use crate::error::{Error, Result};

/// Heap entry ordered so that the *worst* candidate is the maximum: lower
/// score is worse, and among equal scores the larger index is worse.
#[derive(Debug, Clone, Copy)]
struct Worst<S> {
    score: S,
    index: u32,
}

impl<S: PartialOrd> PartialEq for Worst<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: PartialOrd> Eq for Worst<S> {}

impl<S: PartialOrd> PartialOrd for Worst<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: PartialOrd> Ord for Worst<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .expect("scores are never NaN")
            .then(self.index.cmp(&other.index))
    }
}

/// Bounded selection of the `k` best `(index, score)` pairs, ranked by score
/// descending then index ascending.
#[derive(Debug)]
pub struct TopK<S> {
    k: usize,
    heap: BinaryHeap<Worst<S>>,
}

impl<S: PartialOrd + Copy> TopK<S> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, index: u32, score: S) {
        if self.k == 0 {
            return;
        }
        let cand = Worst { score, index };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut top) = self.heap.peek_mut() {
            if cand < *top {
                *top = cand;
            }
        }
    }

    /// Score of the current `k`-th entry once `k` entries are held.
    #[inline]
    pub fn floor(&self) -> Option<S> {
        if self.heap.len() == self.k {
            self.heap.peek().map(|w| w.score)
        } else {
            None
        }
    }

    pub fn into_sorted(self) -> Vec<(u32, S)> {
        let mut v = self.heap.into_vec();
        v.sort();
        v.into_iter().map(|w| (w.index, w.score)).collect()
    }
}

/// Exact top-`k` items by Hamming similarity to `user_code`, skipping the
/// sorted `exclude` list. Ties go to the lower item index. Returns every
/// candidate when fewer than `k` remain.
pub fn top_k_scan(
    items: PackedView<'_>,
    user_code: &[u64],
    k: usize,
    exclude: &[u32],
) -> Result<Vec<(u32, i32)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if user_code.len() != items.words_per_row() {
        return Err(Error::WidthMismatch {
            expected: items.words_per_row(),
            actual: user_code.len(),
        });
    }
    debug_assert!(exclude.windows(2).all(|w| w[0] <= w[1]));
    let mut top = TopK::new(k);
    scan_into(items, user_code, exclude, &mut top);
    Ok(top.into_sorted())
}

/// Pushes every non-excluded item's similarity into `top`. Uses the hardware
/// population count when the CPU has one.
pub(crate) fn scan_into(items: PackedView<'_>, query: &[u64], exclude: &[u32], top: &mut TopK<i32>) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("popcnt") {
        // SAFETY: the feature was detected at runtime.
        unsafe { scan_popcnt(items, query, exclude, top) };
        return;
    }
    scan_generic(items, query, exclude, top);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn scan_popcnt(items: PackedView<'_>, query: &[u64], exclude: &[u32], top: &mut TopK<i32>) {
    scan_generic(items, query, exclude, top);
}

#[inline(always)]
fn scan_generic(items: PackedView<'_>, query: &[u64], exclude: &[u32], top: &mut TopK<i32>) {
    let width = items.width();
    let mut skip = exclude.iter().peekable();
    // Indices arrive in ascending order, so a later item that only ties the
    // current floor can never displace it.
    let mut floor = top.floor();
    for j in 0..items.rows() as u32 {
        while skip.next_if(|&&x| x < j).is_some() {}
        if skip.peek() == Some(&&j) {
            continue;
        }
        let score = similarity_unchecked(items.row(j as usize), query, width);
        if floor.is_some_and(|f| score <= f) {
            continue;
        }
        top.push(j, score);
        floor = top.floor();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamming::PackedCodes;
    use proptest::prelude::*;

    fn items_with_scores() -> (PackedCodes, Vec<u64>) {
        // K = 64; user is all ones, so score = 64 - 2 * zero bits.
        let user = vec![u64::MAX];
        let bits = vec![u64::MAX ^ 1, 0, u64::MAX];
        (PackedCodes::from_words(3, 64, bits).unwrap(), user)
    }

    #[test]
    fn ranks_by_score() {
        let (items, user) = items_with_scores();
        let top = top_k_scan(items.view(), &user, 2, &[]).unwrap();
        assert_eq!(top, vec![(2, 64), (0, 62)]);
    }

    #[test]
    fn exclusion_promotes_next() {
        let (items, user) = items_with_scores();
        let top = top_k_scan(items.view(), &user, 2, &[2]).unwrap();
        assert_eq!(top, vec![(0, 62), (1, -64)]);
    }

    #[test]
    fn k_beyond_candidates_returns_all() {
        let (items, user) = items_with_scores();
        let top = top_k_scan(items.view(), &user, 10, &[0]).unwrap();
        assert_eq!(top, vec![(2, 64), (1, -64)]);
        assert!(top_k_scan(items.view(), &user, 0, &[]).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let items = PackedCodes::from_words(4, 8, vec![1, 1, 1, 1]).unwrap();
        let top = top_k_scan(items.view(), &[1], 3, &[]).unwrap();
        assert_eq!(top, vec![(0, 8), (1, 8), (2, 8)]);
    }

    proptest! {
        #[test]
        fn matches_full_sort(
            width in 1usize..=20,
            n in 1usize..60,
            k in 1usize..70,
            seed_bits in proptest::collection::vec(any::<u64>(), 61),
            excl in proptest::collection::btree_set(0u32..60, 0..10),
        ) {
            // Narrow widths force plenty of ties.
            let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let bits: Vec<u64> = seed_bits[..n].iter().map(|b| b & mask).collect();
            let items = PackedCodes::from_words(n, width, bits).unwrap();
            let user = [seed_bits[60] & mask];
            let exclude: Vec<u32> = excl.into_iter().collect();
            let got = top_k_scan(items.view(), &user, k, &exclude).unwrap();

            let mut all: Vec<(u32, i32)> = (0..n as u32)
                .filter(|j| !exclude.contains(j))
                .map(|j| {
                    let d = (items.row(j as usize)[0] ^ user[0]).count_ones() as i32;
                    (j, width as i32 - 2 * d)
                })
                .collect();
            all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            prop_assert_eq!(got, all);
        }
    }
}
