use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamming::{scan_into, PackedCodes, TopK};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Timing of packed versus dense top-k retrieval over the same codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub num_items: usize,
    pub width: usize,
    pub queries: usize,
    pub k: usize,
    pub scalar: &'static str,
    pub packed_mean_us: f64,
    pub dense_mean_us: f64,
    /// Dense latency over packed latency.
    pub speedup: f64,
    pub arch: &'static str,
    pub os: &'static str,
    pub threads: usize,
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "num_items\twidth\tqueries\tk\tscalar\tpacked_mean_us\tdense_mean_us\tspeedup\tarch\tos\tthreads\n\
             {}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{}\t{}\t{}\n",
            self.num_items,
            self.width,
            self.queries,
            self.k,
            self.scalar,
            self.packed_mean_us,
            self.dense_mean_us,
            self.speedup,
            self.arch,
            self.os,
            self.threads
        )
    }

    pub fn to_table(&self) -> String {
        format!(
            "items {}  width {}  queries {}  k {}  ({}, {}-{}, {} thread)\n\
             packed XOR+popcount  {:>12.3} us/query\n\
             dense inner product  {:>12.3} us/query\n\
             speedup              {:>12.2}x\n",
            self.num_items,
            self.width,
            self.queries,
            self.k,
            self.scalar,
            self.arch,
            self.os,
            self.threads,
            self.packed_mean_us,
            self.dense_mean_us,
            self.speedup
        )
    }
}

/// Dot product with eight independent accumulators.
#[inline]
fn dense_dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

pub fn packed_top_k(items: &PackedCodes, query: &[u64], k: usize) -> Vec<(u32, i32)> {
    let mut top = TopK::new(k);
    scan_into(items.view(), query, &[], &mut top);
    top.into_sorted()
}

pub fn dense_top_k<T: Scalar>(items: &Matrix<T>, query: &[T], k: usize) -> Vec<(u32, T)> {
    let mut top = TopK::new(k);
    let mut floor = top.floor();
    for j in 0..items.rows() {
        let score = dense_dot(items.row(j), query);
        if floor.is_some_and(|f| score <= f) {
            continue;
        }
        top.push(j as u32, score);
        floor = top.floor();
    }
    top.into_sorted()
}

/// Runs every query through both scoring paths on the calling thread and
/// checks that the ranked lists agree exactly before reporting timings.
pub fn bench_retrieval<T: Scalar>(
    items: &PackedCodes,
    dense: &Matrix<T>,
    queries: &PackedCodes,
    k: usize,
) -> Result<BenchReport> {
    if k == 0 || queries.rows() == 0 {
        return Err(Error::InvalidArgument("need k >= 1 and at least one query".into()));
    }
    if dense.rows() != items.rows() || dense.cols() != items.width() {
        return Err(Error::ShapeMismatch("dense and packed item codes differ in shape".into()));
    }
    if queries.width() != items.width() {
        return Err(Error::WidthMismatch {
            expected: items.width(),
            actual: queries.width(),
        });
    }
    if items.to_dense::<T>() != *dense {
        return Err(Error::InvalidArgument(
            "dense item codes do not encode the packed codes".into(),
        ));
    }
    let dense_queries = queries.to_dense::<T>();

    // Warm both paths once so first-touch costs do not land on one side.
    std::hint::black_box(packed_top_k(items, queries.row(0), k));
    std::hint::black_box(dense_top_k(dense, dense_queries.row(0), k));

    let mut packed_time = Duration::ZERO;
    let mut dense_time = Duration::ZERO;
    for q in 0..queries.rows() {
        let t = Instant::now();
        let a = std::hint::black_box(packed_top_k(items, queries.row(q), k));
        packed_time += t.elapsed();

        let t = Instant::now();
        let b = std::hint::black_box(dense_top_k(dense, dense_queries.row(q), k));
        dense_time += t.elapsed();

        let same = a.len() == b.len()
            && a.iter().zip(&b).all(|(&(i, s), &(j, v))| {
                i == j && v.to_f64_lossless() == f64::from(s)
            });
        if !same {
            return Err(Error::RankingMismatch { query: q });
        }
    }

    let n = queries.rows() as f64;
    let packed_mean_us = packed_time.as_secs_f64() * 1e6 / n;
    let dense_mean_us = dense_time.as_secs_f64() * 1e6 / n;
    Ok(BenchReport {
        num_items: items.rows(),
        width: items.width(),
        queries: queries.rows(),
        k,
        scalar: std::any::type_name::<T>(),
        packed_mean_us,
        dense_mean_us,
        speedup: dense_mean_us / packed_mean_us.max(f64::MIN_POSITIVE),
        arch: std::env::consts::ARCH,
        os: std::env::consts::OS,
        threads: 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_codes(rows: usize, width: usize, rng: &mut ChaCha8Rng) -> PackedCodes {
        let signs: Vec<i8> = (0..rows * width).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
        PackedCodes::from_signs(rows, width, &signs).unwrap()
    }

    #[test]
    fn paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for width in [13, 64, 100] {
            let items = random_codes(500, width, &mut rng);
            let queries = random_codes(5, width, &mut rng);
            let dense = items.to_dense::<f32>();
            let report = bench_retrieval(&items, &dense, &queries, 20).unwrap();
            assert_eq!(report.queries, 5);
            assert!(report.speedup > 0.0);
            assert_eq!(report.to_tsv().lines().count(), 2);
        }
    }

    #[test]
    fn mismatched_dense_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items = random_codes(10, 8, &mut rng);
        let queries = random_codes(2, 8, &mut rng);
        let mut dense = items.to_dense::<f64>();
        let v = dense.get(3, 2);
        dense.set(3, 2, -v);
        assert!(bench_retrieval(&items, &dense, &queries, 3).is_err());
    }

    #[test]
    fn dense_dot_matches_plain_sum() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 - 9.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i % 3) as f64).collect();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dense_dot(&a, &b), plain);
    }
}
