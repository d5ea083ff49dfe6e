//! Ranking metrics, sparsity-group analysis and the retrieval benchmark.

mod bench;
mod evaluate;
mod groups;
mod metrics;

pub use bench::{bench_retrieval, dense_top_k, packed_top_k, BenchReport};
pub use evaluate::{
    evaluate, evaluate_lists, evaluate_validation, EvalOptions, GroupMetrics, KMetrics, MetricsReport,
    DEFAULT_KS,
};
pub use groups::{sparsity_groups, SparsityGroup, SparsityGroups, NUM_GROUPS};
pub use metrics::{hit_ratio, hit_ratio_at_k, ndcg_at_k, HitRatioKind};
