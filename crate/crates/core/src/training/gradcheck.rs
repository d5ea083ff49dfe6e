use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::backward;
use super::loss::{sigmoid, total_loss, Batch, LossConfig};
use crate::corpus::BipartiteGraph;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{dot, forward_with_masks, ForwardTrace, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates to check; every coordinate when the table is smaller.
    pub max_coordinates: usize,
    /// Kink margin as a multiple of `epsilon`.
    pub kink_factor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_coordinates: 2000,
            kink_factor: 10.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(row, col)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a kink and were left out.
    pub skipped: usize,
    /// Smallest distance of any kink argument from its kink at the base point.
    pub kink_margin: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

fn run_single<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn hinge_args(trace: &ForwardTrace<f64>, params: &ModelParams<f64>, batch: &Batch, cfg: &LossConfig) -> Vec<f64> {
    let nu = params.num_users();
    let mut out = Vec::new();
    let scoring = trace.scoring_codes();
    let mut push = |codes: &Matrix<f64>| {
        for (u, i, j) in batch.triplets() {
            let (u, i, j) = (u as usize, nu + i as usize, nu + j as usize);
            let arg = -sigmoid(dot(codes.row(u), codes.row(i))) + sigmoid(dot(codes.row(u), codes.row(j))) + cfg.alpha;
            out.push(arg);
        }
    };
    if cfg.use_initial_rank {
        push(trace.initial().matrix());
    }
    if cfg.use_final_rank {
        push(&scoring);
    }
    out
}

/// Which side of every kink each piecewise quantity lies on.
fn activation_pattern(trace: &ForwardTrace<f64>, params: &ModelParams<f64>, batch: &Batch, cfg: &LossConfig) -> Vec<u8> {
    let mut p = Vec::new();
    for layer in &trace.layers {
        p.extend(layer.s.as_slice().iter().map(|&s| if s < -1.0 { 0 } else if s > 1.0 { 2 } else { 1 }));
        p.extend(layer.d.as_slice().iter().map(|&d| (d < 0.0) as u8));
    }
    p.extend(hinge_args(trace, params, batch, cfg).iter().map(|&a| (a > 0.0) as u8));
    p
}

/// Smallest distance of `|s| - 1`, `d` or a hinge argument from zero.
pub fn kink_margin(trace: &ForwardTrace<f64>, params: &ModelParams<f64>, batch: &Batch, cfg: &LossConfig) -> f64 {
    let mut margin = f64::INFINITY;
    for layer in &trace.layers {
        for &s in layer.s.as_slice() {
            margin = margin.min((s.abs() - 1.0).abs());
        }
        for &d in layer.d.as_slice() {
            margin = margin.min(d.abs());
        }
    }
    for a in hinge_args(trace, params, batch, cfg) {
        margin = margin.min(a.abs());
    }
    margin
}

fn loss_and_pattern(
    params: &ModelParams<f64>,
    graph: &BipartiteGraph,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<(f64, Vec<u8>)> {
    let trace = forward_with_masks(params, graph, None, None)?;
    let loss = total_loss(&trace, params, batch, cfg)?.breakdown.total;
    Ok((loss, activation_pattern(&trace, params, batch, cfg)))
}

/// Analytic gradient of the full loss, dropout disabled.
pub fn analytic_gradient(
    params: &ModelParams<f64>,
    graph: &BipartiteGraph,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<Matrix<f64>> {
    let trace = forward_with_masks(params, graph, None, None)?;
    let out = total_loss(&trace, params, batch, cfg)?;
    backward(&trace, graph, params, &out.grad_final, &out.grad_initial, cfg.lambda2)
}

/// Compares the backward pass against central differences of the loss.
pub fn finite_difference_check(
    params: &ModelParams<f64>,
    graph: &BipartiteGraph,
    batch: &Batch,
    loss: &LossConfig,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = run_single(|| analytic_gradient(params, graph, batch, loss))??;
    check_against(params, graph, batch, loss, &analytic, cfg)
}

/// Central-difference check of an arbitrary candidate gradient. Coordinates
/// whose `±epsilon` perturbation changes any activation pattern are skipped.
pub fn check_against(
    params: &ModelParams<f64>,
    graph: &BipartiteGraph,
    batch: &Batch,
    loss: &LossConfig,
    analytic: &Matrix<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !analytic.same_shape(params.embeddings()) {
        return Err(Error::ShapeMismatch("candidate gradient shape".into()));
    }
    run_single(|| {
        let base_trace = forward_with_masks(params, graph, None, None)?;
        let base_pattern = activation_pattern(&base_trace, params, batch, loss);
        let margin = kink_margin(&base_trace, params, batch, loss);

        let total = params.embeddings().as_slice().len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut coords: Vec<usize> = if total <= cfg.max_coordinates {
            (0..total).collect()
        } else {
            sample(&mut rng, total, cfg.max_coordinates).into_vec()
        };
        coords.sort_unstable();

        let k = params.width();
        let eps = cfg.epsilon;
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            checked: 0,
            skipped: 0,
            kink_margin: margin,
        };
        let mut shifted = params.clone();
        for x in coords {
            let orig = params.embeddings().as_slice()[x];
            shifted.embeddings_mut().as_mut_slice()[x] = orig + eps;
            let (lp, pp) = loss_and_pattern(&shifted, graph, batch, loss)?;
            shifted.embeddings_mut().as_mut_slice()[x] = orig - eps;
            let (lm, pm) = loss_and_pattern(&shifted, graph, batch, loss)?;
            shifted.embeddings_mut().as_mut_slice()[x] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let err = relative_error(analytic.as_slice()[x], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((x / k, x % k));
            }
        }
        Ok(report)
    })?
}

/// Redraws the embeddings uniformly in `±bound` until every kink argument
/// is at least `kink_factor * epsilon` away from its kink.
pub fn resample_away_from_kinks<R: Rng + ?Sized>(
    params: &ModelParams<f64>,
    graph: &BipartiteGraph,
    batch: &Batch,
    loss: &LossConfig,
    cfg: &GradCheckConfig,
    bound: f64,
    max_tries: usize,
    rng: &mut R,
) -> Result<ModelParams<f64>> {
    let need = cfg.kink_factor * cfg.epsilon;
    let mut current = params.clone();
    for _ in 0..max_tries {
        let trace = forward_with_masks(&current, graph, None, None)?;
        if kink_margin(&trace, &current, batch, loss) > need {
            return Ok(current);
        }
        let e = Matrix::uniform(params.num_nodes(), params.width(), bound, rng);
        current = ModelParams::new(e, params.num_users(), params.beta(), params.layers())?;
    }
    Err(Error::InvalidArgument(format!(
        "no kink-free instance within {max_tries} draws"
    )))
}

/// Small random problem for gradient checking: each user-item pair is an
/// edge with probability one half (every user keeps at least one edge and
/// one non-edge), embeddings uniform in `±1` and all edges as positives.
pub fn random_instance(
    users: usize,
    items: usize,
    width: usize,
    layers: usize,
    negatives: usize,
    seed: u64,
) -> Result<(ModelParams<f64>, BipartiteGraph, Batch)> {
    if users == 0 || items < 2 {
        return Err(Error::InvalidArgument("need at least one user and two items".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..users as u32 {
        let mut row: Vec<u32> = (0..items as u32).filter(|_| rng.gen_bool(0.5)).collect();
        if row.is_empty() {
            row.push(rng.gen_range(0..items as u32));
        }
        if row.len() == items {
            row.remove(rng.gen_range(0..items));
        }
        edges.extend(row.into_iter().map(|i| (u, i)));
    }
    let graph = BipartiteGraph::from_edges(users, items, edges.iter().copied());
    let e = Matrix::uniform(users + items, width, 1.0, &mut rng);
    let params = ModelParams::new(e, users, 1.0, layers)?;
    let batch = Batch::sample(&graph, edges, negatives, &mut rng)?;
    Ok((params, graph, batch))
}
