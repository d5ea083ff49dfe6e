use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::groups::{sparsity_groups, SparsityGroups};
use super::metrics::{hit_ratio, ndcg_at_k, HitRatioKind};
use crate::corpus::SplitDataset;
use crate::error::{Error, Result};
use crate::hamming::{top_k_scan, PackedCodes};

pub const DEFAULT_KS: [usize; 2] = [50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub hr_kind: HitRatioKind,
    /// Also break the metrics down by sparsity group.
    pub groups: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            hr_kind: HitRatioKind::Recall,
            groups: true,
        }
    }
}

impl EvalOptions {
    pub fn with_ks(ks: &[usize]) -> Self {
        Self {
            ks: ks.to_vec(),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidArgument(
                "cutoffs must be a non-empty list of positive integers".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub users: usize,
    pub degree_range: Option<(usize, usize)>,
    pub interaction_sum: usize,
    pub metrics: Vec<KMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub hr_kind: HitRatioKind,
    pub metrics: Vec<KMetrics>,
    pub evaluated_users: usize,
    /// Users with no relevant items, left out of every average.
    pub skipped_users: usize,
    pub groups: Option<Vec<GroupMetrics>>,
}

impl MetricsReport {
    pub fn get(&self, k: usize) -> Option<KMetrics> {
        self.metrics.iter().copied().find(|m| m.k == k)
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.get(k).map(|m| m.hr)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.get(k).map(|m| m.ndcg)
    }

    /// Tab-separated rows `scope k hr ndcg users`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("scope\tk\thr\tndcg\tusers\n");
        for m in &self.metrics {
            let _ = writeln!(out, "all\t{}\t{:.6}\t{:.6}\t{}", m.k, m.hr, m.ndcg, self.evaluated_users);
        }
        for (g, group) in self.groups.iter().flatten().enumerate() {
            for m in &group.metrics {
                let _ = writeln!(
                    out,
                    "group{}\t{}\t{:.6}\t{:.6}\t{}",
                    g + 1,
                    m.k,
                    m.hr,
                    m.ndcg,
                    group.users
                );
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "evaluated users: {}  skipped (no relevant items): {}",
            self.evaluated_users, self.skipped_users
        );
        let _ = writeln!(out, "{:<8} {:>6} {:>10} {:>10}", "scope", "k", "HR", "NDCG");
        for m in &self.metrics {
            let _ = writeln!(out, "{:<8} {:>6} {:>10.4} {:>10.4}", "all", m.k, m.hr, m.ndcg);
        }
        if let Some(groups) = &self.groups {
            for (g, group) in groups.iter().enumerate() {
                let range = match group.degree_range {
                    Some((lo, hi)) => format!("degree {lo}..={hi}"),
                    None => "empty".to_string(),
                };
                let _ = writeln!(
                    out,
                    "group {} ({}, {} users, {} train interactions)",
                    g + 1,
                    range,
                    group.users,
                    group.interaction_sum
                );
                for m in &group.metrics {
                    let _ = writeln!(
                        out,
                        "{:<8} {:>6} {:>10.4} {:>10.4}",
                        format!("group{}", g + 1),
                        m.k,
                        m.hr,
                        m.ndcg
                    );
                }
            }
        }
        out
    }
}

/// Test-set metrics: every user's test items are ranked against all items
/// outside their train and validation sets.
pub fn evaluate(codes: &PackedCodes, split: &SplitDataset, opts: &EvalOptions) -> Result<MetricsReport> {
    check_layout(codes, split)?;
    let mut exclude = split.train.items_by_user();
    for (ex, valid) in exclude.iter_mut().zip(split.validation.items_by_user()) {
        ex.extend(valid);
        ex.sort_unstable();
    }
    let relevant = split.test.items_by_user();
    evaluate_lists(codes, &exclude, &relevant, &split.train.user_degrees(), opts)
}

/// Validation metrics, ranking against everything outside the train set.
pub fn evaluate_validation(
    codes: &PackedCodes,
    split: &SplitDataset,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    check_layout(codes, split)?;
    let exclude = split.train.items_by_user();
    let relevant = split.validation.items_by_user();
    evaluate_lists(codes, &exclude, &relevant, &split.train.user_degrees(), opts)
}

fn check_layout(codes: &PackedCodes, split: &SplitDataset) -> Result<()> {
    let expected = split.num_users() + split.num_items();
    if codes.rows() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} code rows, split has {} users and {} items",
            codes.rows(),
            split.num_users(),
            split.num_items()
        )));
    }
    Ok(())
}

/// Core evaluation over explicit per-user lists. `codes` holds the users'
/// rows followed by the items'; `exclude` and `relevant` are sorted per user.
pub fn evaluate_lists(
    codes: &PackedCodes,
    exclude: &[Vec<u32>],
    relevant: &[Vec<u32>],
    train_degrees: &[usize],
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    opts.validate()?;
    let num_users = relevant.len();
    if exclude.len() != num_users || train_degrees.len() != num_users {
        return Err(Error::ShapeMismatch("per-user lists disagree in length".into()));
    }
    if codes.rows() < num_users {
        return Err(Error::ShapeMismatch(format!(
            "{} code rows for {} users",
            codes.rows(),
            num_users
        )));
    }
    let items = codes.slice(num_users..codes.rows());
    let max_k = *opts.ks.iter().max().unwrap();

    let per_user: Vec<Option<Vec<(f64, f64)>>> = (0..num_users)
        .into_par_iter()
        .map(|u| {
            if relevant[u].is_empty() {
                return Ok(None);
            }
            let top = top_k_scan(items, codes.row(u), max_k, &exclude[u])?;
            let ranked: Vec<u32> = top.into_iter().map(|(i, _)| i).collect();
            Ok(Some(
                opts.ks
                    .iter()
                    .map(|&k| {
                        (
                            hit_ratio(&ranked, &relevant[u], k, opts.hr_kind).unwrap(),
                            ndcg_at_k(&ranked, &relevant[u], k).unwrap(),
                        )
                    })
                    .collect(),
            ))
        })
        .collect::<Result<_>>()?;

    let evaluated: Vec<u32> = (0..num_users as u32)
        .filter(|&u| per_user[u as usize].is_some())
        .collect();
    let metrics = average(&opts.ks, &per_user, &evaluated);

    let groups = if opts.groups && evaluated.len() >= super::groups::NUM_GROUPS {
        let sg: SparsityGroups = sparsity_groups(train_degrees, &evaluated)?;
        Some(
            sg.groups
                .iter()
                .map(|g| GroupMetrics {
                    users: g.users.len(),
                    degree_range: g.degree_range,
                    interaction_sum: g.interaction_sum,
                    metrics: average(&opts.ks, &per_user, &g.users),
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(MetricsReport {
        hr_kind: opts.hr_kind,
        metrics,
        evaluated_users: evaluated.len(),
        skipped_users: num_users - evaluated.len(),
        groups,
    })
}

/// Means over `users` in ascending order, so results do not depend on
/// thread scheduling. Empty user sets average to zero.
fn average(ks: &[usize], per_user: &[Option<Vec<(f64, f64)>>], users: &[u32]) -> Vec<KMetrics> {
    let mut sorted = users.to_vec();
    sorted.sort_unstable();
    ks.iter()
        .enumerate()
        .map(|(i, &k)| {
            let (mut hr, mut ndcg) = (0.0, 0.0);
            for &u in &sorted {
                let (h, n) = per_user[u as usize].as_ref().expect("evaluated user")[i];
                hr += h;
                ndcg += n;
            }
            let n = sorted.len().max(1) as f64;
            KMetrics {
                k,
                hr: hr / n,
                ndcg: ndcg / n,
            }
        })
        .collect()
}
