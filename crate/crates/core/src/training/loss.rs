use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_negatives, BipartiteGraph};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{dot, ForwardTrace, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of each ranking term.
    pub lambda1: f64,
    /// Weight of the squared L2 norm of the embeddings.
    pub lambda2: f64,
    /// Hinge margin.
    pub alpha: f64,
    /// Ranking term on the initial codes.
    pub use_initial_rank: bool,
    /// Ranking term on the final codes.
    pub use_final_rank: bool,
    pub negatives_per_positive: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 1e-7,
            alpha: 0.2,
            use_initial_rank: true,
            use_final_rank: true,
            negatives_per_positive: 5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("alpha", self.alpha)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::InvalidArgument("negatives_per_positive must be at least 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Summed binary cross-entropy of sigmoid scores and its gradient
/// `sigmoid(score) - label` per score.
pub fn cross_entropy_loss(scores: &[f64], labels: &[bool]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch("scores and labels differ in length".into()));
    }
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&y, &r)| {
            loss += if r { softplus(-y) } else { softplus(y) };
            sigmoid(y) - if r { 1.0 } else { 0.0 }
        })
        .collect();
    Ok((loss, grad))
}

/// Summed hinge `max(0, -sigmoid(pos) + sigmoid(neg) + alpha)` over aligned
/// pairs, with gradients for both sides. A hinge argument of exactly zero
/// counts as inactive.
pub fn ranking_loss(pos: &[f64], neg: &[f64], alpha: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if pos.len() != neg.len() {
        return Err(Error::ShapeMismatch("positive and negative scores differ in length".into()));
    }
    let mut loss = 0.0;
    let mut g_pos = vec![0.0; pos.len()];
    let mut g_neg = vec![0.0; neg.len()];
    for (t, (&p, &n)) in pos.iter().zip(neg).enumerate() {
        let (sp, sn) = (sigmoid(p), sigmoid(n));
        let arg = -sp + sn + alpha;
        if arg > 0.0 {
            loss += arg;
            g_pos[t] = -sp * (1.0 - sp);
            g_neg[t] = sn * (1.0 - sn);
        }
    }
    Ok((loss, g_pos, g_neg))
}

/// Training edges of one mini-batch, each with its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub positives: Vec<(u32, u32)>,
    /// `negs_per_pos` item indices per positive, flattened in order.
    pub negatives: Vec<u32>,
    pub negs_per_pos: usize,
}

impl Batch {
    pub fn new(positives: Vec<(u32, u32)>, negatives: Vec<u32>, negs_per_pos: usize) -> Result<Self> {
        if negatives.len() != positives.len() * negs_per_pos {
            return Err(Error::ShapeMismatch(format!(
                "{} negatives for {} positives at {} each",
                negatives.len(),
                positives.len(),
                negs_per_pos
            )));
        }
        Ok(Self {
            positives,
            negatives,
            negs_per_pos,
        })
    }

    /// Samples `negs_per_pos` non-interacted items for every positive edge.
    pub fn sample<R: Rng + ?Sized>(
        graph: &BipartiteGraph,
        positives: Vec<(u32, u32)>,
        negs_per_pos: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut negatives = Vec::with_capacity(positives.len() * negs_per_pos);
        for &(u, _) in &positives {
            negatives.extend(sample_negatives(graph, u, negs_per_pos, rng)?);
        }
        Self::new(positives, negatives, negs_per_pos)
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    /// `(user, positive item, negative item)` for every sampled negative.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.positives.iter().enumerate().flat_map(move |(p, &(u, i))| {
            self.negatives[p * self.negs_per_pos..(p + 1) * self.negs_per_pos]
                .iter()
                .map(move |&j| (u, i, j))
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cross: f64,
    pub rank_initial: f64,
    pub rank_final: f64,
    pub l2: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.cross += o.cross;
        self.rank_initial += o.rank_initial;
        self.rank_final += o.rank_final;
        self.l2 += o.l2;
        self.total += o.total;
    }
}

/// Loss value plus the upstream gradients the backward pass starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub breakdown: LossBreakdown,
    /// Gradient with respect to the final codes, already routed through the
    /// bit-dropout mask.
    pub grad_final: Matrix<T>,
    /// Gradient reaching the initial codes directly from the initial ranking term.
    pub grad_initial: Matrix<T>,
}

/// Adds `coef * d(score)/d(codes)` for `score = <codes[a], codes[b]>`.
fn add_pair<T: Scalar>(g: &mut [f64], codes: &Matrix<T>, a: usize, b: usize, coef: f64) {
    if coef == 0.0 {
        return;
    }
    let k = codes.cols();
    let (ra, rb) = (codes.row(a), codes.row(b));
    for c in 0..k {
        g[a * k + c] += coef * rb[c].to_f64_lossless();
        g[b * k + c] += coef * ra[c].to_f64_lossless();
    }
}

/// Cross-entropy on the final codes, the two optional ranking terms and the
/// L2 penalty. Item `j` lives in row `num_users + j`.
pub fn total_loss<T: Scalar>(
    trace: &ForwardTrace<T>,
    params: &ModelParams<T>,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    cfg.validate()?;
    let (rows, k) = (params.num_nodes(), params.width());
    if trace.final_codes().rows() != rows || trace.final_codes().cols() != k {
        return Err(Error::ShapeMismatch("trace does not match parameters".into()));
    }
    let nu = params.num_users();
    let item = |j: u32| nu + j as usize;
    let scoring = trace.scoring_codes();
    let h0 = trace.initial().matrix();
    let mut g_fin = vec![0.0f64; rows * k];
    let mut g_init = vec![0.0f64; rows * k];

    // Cross-entropy: positives labeled 1, sampled negatives labeled 0.
    let mut pairs = Vec::with_capacity(batch.positives.len() * (1 + batch.negs_per_pos));
    let mut labels = Vec::with_capacity(pairs.capacity());
    for (p, &(u, i)) in batch.positives.iter().enumerate() {
        pairs.push((u as usize, item(i)));
        labels.push(true);
        for &j in &batch.negatives[p * batch.negs_per_pos..(p + 1) * batch.negs_per_pos] {
            pairs.push((u as usize, item(j)));
            labels.push(false);
        }
    }
    let scores: Vec<f64> = pairs.iter().map(|&(a, b)| dot(scoring.row(a), scoring.row(b))).collect();
    let (cross, g_ce) = cross_entropy_loss(&scores, &labels)?;
    for (&(a, b), &g) in pairs.iter().zip(&g_ce) {
        add_pair(&mut g_fin, &scoring, a, b, g);
    }

    let triplets: Vec<(usize, usize, usize)> = batch
        .triplets()
        .map(|(u, i, j)| (u as usize, item(i), item(j)))
        .collect();
    let rank = |codes: &Matrix<T>, g: &mut [f64]| -> Result<f64> {
        let pos: Vec<f64> = triplets.iter().map(|&(u, i, _)| dot(codes.row(u), codes.row(i))).collect();
        let neg: Vec<f64> = triplets.iter().map(|&(u, _, j)| dot(codes.row(u), codes.row(j))).collect();
        let (loss, gp, gn) = ranking_loss(&pos, &neg, cfg.alpha)?;
        for (t, &(u, i, j)) in triplets.iter().enumerate() {
            add_pair(g, codes, u, i, cfg.lambda1 * gp[t]);
            add_pair(g, codes, u, j, cfg.lambda1 * gn[t]);
        }
        Ok(loss)
    };
    let rank_initial = if cfg.use_initial_rank { rank(h0, &mut g_init)? } else { 0.0 };
    let rank_final = if cfg.use_final_rank { rank(&scoring, &mut g_fin)? } else { 0.0 };

    let l2 = cfg.lambda2 * params.embeddings().squared_norm();
    let total = cross + cfg.lambda1 * (rank_initial + rank_final) + l2;

    let to_t = |g: Vec<f64>| Matrix::from_vec(rows, k, g.into_iter().map(T::from_f64_round).collect());
    let mut grad_final = to_t(g_fin)?;
    if let Some(mask) = &trace.bit_mask {
        mask.apply_in_place(&mut grad_final);
    }
    Ok(LossOutput {
        breakdown: LossBreakdown {
            cross,
            rank_initial,
            rank_final,
            l2,
            total,
        },
        grad_final,
        grad_initial: to_t(g_init)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_graph, InteractionDataset};
    use crate::model::{forward, DropoutConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cross_entropy_examples() {
        let (l, g) = cross_entropy_loss(&[0.0], &[true]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![-0.5]);
        let (l, g) = cross_entropy_loss(&[64.0], &[true]).unwrap();
        assert!(l > 0.0 && (l - 1.6e-28).abs() < 1e-29);
        assert!(g[0].abs() < 1e-27);
        let (l, _) = cross_entropy_loss(&[-800.0, 800.0], &[false, true]).unwrap();
        assert!(l.is_finite() && l < 1e-300);
        assert!(cross_entropy_loss(&[0.0], &[]).is_err());
    }

    #[test]
    fn cross_entropy_grad_matches_differences() {
        let eps = 1e-6;
        for &y in &[-3.1, -0.2, 0.0, 0.7, 5.5] {
            for &r in &[true, false] {
                let (_, g) = cross_entropy_loss(&[y], &[r]).unwrap();
                let lp = cross_entropy_loss(&[y + eps], &[r]).unwrap().0;
                let lm = cross_entropy_loss(&[y - eps], &[r]).unwrap().0;
                assert!((g[0] - (lp - lm) / (2.0 * eps)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn ranking_examples() {
        let (l, gp, gn) = ranking_loss(&[10.0], &[-10.0], 0.2).unwrap();
        assert_eq!((l, gp[0], gn[0]), (0.0, 0.0, 0.0));
        let (l, _, _) = ranking_loss(&[1.3], &[1.3], 0.2).unwrap();
        assert!((l - 0.2).abs() < 1e-15);
        // Exactly at the boundary the hinge is inactive.
        let (l, gp, _) = ranking_loss(&[0.0], &[0.0], 0.0).unwrap();
        assert_eq!((l, gp[0]), (0.0, 0.0));
    }

    #[test]
    fn ranking_grad_matches_differences() {
        let eps = 1e-6;
        for &(p, n) in &[(0.3, 0.1), (-1.0, 2.0), (0.5, 0.5)] {
            let (_, gp, gn) = ranking_loss(&[p], &[n], 0.2).unwrap();
            let dp = (ranking_loss(&[p + eps], &[n], 0.2).unwrap().0
                - ranking_loss(&[p - eps], &[n], 0.2).unwrap().0)
                / (2.0 * eps);
            let dn = (ranking_loss(&[p], &[n + eps], 0.2).unwrap().0
                - ranking_loss(&[p], &[n - eps], 0.2).unwrap().0)
                / (2.0 * eps);
            assert!((gp[0] - dp).abs() < 1e-8);
            assert!((gn[0] - dn).abs() < 1e-8);
        }
    }

    fn setup() -> (ModelParams<f64>, BipartiteGraph, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<(u32, u32)> = (0..20).map(|_| (rng.gen_range(0..5), rng.gen_range(0..6))).collect();
        let g = build_graph(&InteractionDataset::from_pairs(5, 6, &pairs));
        let p = ModelParams::xavier(5, 6, 8, 2, 1.0, &mut rng).unwrap();
        let pos: Vec<(u32, u32)> = g.edges().take(6).collect();
        let b = Batch::sample(&g, pos, 2, &mut rng).unwrap();
        (p, g, b)
    }

    #[test]
    fn degenerate_weights_reduce_to_cross_entropy() {
        let (p, g, b) = setup();
        let t = forward(&p, &g, &DropoutConfig::disabled(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let cfg = LossConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..LossConfig::default()
        };
        let out = total_loss(&t, &p, &b, &cfg).unwrap();
        assert_eq!(out.breakdown.total, out.breakdown.cross);
        assert!(out.grad_initial.as_slice().iter().all(|&v| v == 0.0));

        let off = LossConfig {
            use_initial_rank: false,
            use_final_rank: false,
            ..LossConfig::default()
        };
        let out2 = total_loss(&t, &p, &b, &off).unwrap();
        assert_eq!(out2.breakdown.rank_initial + out2.breakdown.rank_final, 0.0);
        assert_eq!(out2.breakdown.l2, 1e-7 * p.embeddings().squared_norm());
    }

    #[test]
    fn triplets_enumerate_every_negative() {
        let b = Batch::new(vec![(0, 1), (2, 3)], vec![4, 5, 6, 7], 2).unwrap();
        let t: Vec<_> = b.triplets().collect();
        assert_eq!(t, vec![(0, 1, 4), (0, 1, 5), (2, 3, 6), (2, 3, 7)]);
        assert!(Batch::new(vec![(0, 1)], vec![4], 2).is_err());
    }
}
