use serde::{Deserialize, Serialize};

/// How hits are normalized when a user has several relevant items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HitRatioKind {
    /// `hits / min(|relevant|, k)`.
    #[default]
    Recall,
    /// 1 if any relevant item is in the top `k`, else 0.
    AnyHit,
}

#[inline]
fn is_relevant(relevant: &[u32], item: u32) -> bool {
    relevant.binary_search(&item).is_ok()
}

/// Recall-style hit ratio of the top `k` of `ranked` against the sorted
/// `relevant` list. `None` when there is nothing relevant.
pub fn hit_ratio_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    hit_ratio(ranked, relevant, k, HitRatioKind::Recall)
}

pub fn hit_ratio(ranked: &[u32], relevant: &[u32], k: usize, kind: HitRatioKind) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|&&i| is_relevant(relevant, i))
        .count();
    Some(match kind {
        HitRatioKind::Recall => hits as f64 / relevant.len().min(k) as f64,
        HitRatioKind::AnyHit => (hits > 0) as u8 as f64,
    })
}

/// Binary-relevance NDCG of the top `k`; the ideal list places
/// `min(|relevant|, k)` hits first.
pub fn ndcg_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| is_relevant(relevant, i))
        .map(|(pos, _)| discount(pos))
        .sum();
    let idcg: f64 = (0..relevant.len().min(k)).map(discount).sum();
    Some(dcg / idcg)
}

/// `1 / log2(1 + rank)` for the 0-based position `pos`.
#[inline]
fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}
