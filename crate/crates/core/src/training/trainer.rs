use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::backward::backward;
use super::loss::{total_loss, Batch, LossBreakdown, LossConfig};
use super::report::{EpochRecord, StopReason, TrainReport};
use super::schedule::{BetaSchedule, EarlyStopping, StopDecision};
use crate::corpus::{build_graph, BipartiteGraph, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate_lists, EvalOptions, HitRatioKind};
use crate::matrix::Matrix;
use crate::model::{forward, inference_codes, DropoutConfig, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Code length `K`.
    pub width: usize,
    /// Propagation depth `L`.
    pub layers: usize,
    pub beta: BetaSchedule,
    pub loss: LossConfig,
    pub dropout: DropoutConfig,
    pub adam: AdamConfig,
    /// Training edges per mini-batch.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Cutoff of the validation hit ratio used for early stopping.
    pub valid_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            width: 64,
            layers: 2,
            beta: BetaSchedule::default(),
            loss: LossConfig::default(),
            dropout: DropoutConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 3000,
            max_epochs: 500,
            patience: 10,
            valid_k: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.layers == 0 || self.batch_size == 0 || self.valid_k == 0 || self.patience == 0 {
            return Err(Error::InvalidArgument(
                "width, layers, batch_size, valid_k and patience must be positive".into(),
            ));
        }
        self.beta.validate()?;
        self.loss.validate()?;
        self.dropout.validate()?;
        self.adam.validate()
    }
}

/// Mini-batch training with per-epoch validation, early stopping and
/// resumable state.
pub struct Trainer<'a, T> {
    split: &'a SplitDataset,
    graph: BipartiteGraph,
    config: TrainConfig,
    params: ModelParams<T>,
    adam: AdamState<T>,
    rng: ChaCha8Rng,
    stopper: EarlyStopping,
    best: Option<(Matrix<T>, T)>,
    report: TrainReport,
    valid_exclude: Vec<Vec<u32>>,
    valid_relevant: Vec<Vec<u32>>,
    train_degrees: Vec<usize>,
}

impl<'a, T: Scalar> Trainer<'a, T> {
    pub fn new(split: &'a SplitDataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if split.train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let graph = build_graph(&split.train);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::xavier(
            split.num_users(),
            split.num_items(),
            config.width,
            config.layers,
            T::from_f64_round(config.beta.beta_at(0)),
            &mut rng,
        )?;
        let adam = AdamState::new(params.num_nodes(), params.width(), config.adam);
        Ok(Self {
            valid_exclude: split.train.items_by_user(),
            valid_relevant: split.validation.items_by_user(),
            train_degrees: split.train.user_degrees(),
            split,
            graph,
            stopper: EarlyStopping::new(config.patience),
            report: TrainReport::new(config.valid_k),
            config,
            params,
            adam,
            rng,
            best: None,
        })
    }

    pub fn graph(&self) -> &BipartiteGraph {
        &self.graph
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn report(&self) -> &TrainReport {
        &self.report
    }

    pub fn epochs_done(&self) -> usize {
        self.report.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.report.stop_reason.is_some()
    }

    /// Raises the epoch limit of a resumed run. Clears a `MaxEpochs` stop.
    pub fn set_max_epochs(&mut self, max_epochs: usize) {
        self.config.max_epochs = max_epochs;
        if self.report.stop_reason == Some(StopReason::MaxEpochs) && self.epochs_done() < max_epochs {
            self.report.stop_reason = None;
        }
    }

    fn validation_metrics(&self) -> Result<Option<(f64, f64)>> {
        if self.split.validation.is_empty() {
            return Ok(None);
        }
        let codes = inference_codes(&self.params, &self.graph)?;
        let opts = EvalOptions {
            ks: vec![self.config.valid_k],
            hr_kind: HitRatioKind::Recall,
            groups: false,
        };
        let r = evaluate_lists(&codes, &self.valid_exclude, &self.valid_relevant, &self.train_degrees, &opts)?;
        Ok(Some((r.metrics[0].hr, r.metrics[0].ndcg)))
    }

    /// Runs one epoch: every training edge once in shuffled mini-batches,
    /// then validation and the stopping rule.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord> {
        if self.is_finished() {
            return Err(Error::InvalidArgument("training already finished".into()));
        }
        let start = Instant::now();
        let e = self.epochs_done();
        let beta = self.config.beta.beta_at(e);
        self.params.set_beta(T::from_f64_round(beta))?;

        let mut order: Vec<usize> = (0..self.graph.num_edges()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = LossBreakdown::default();
        let mut batches = 0;
        let mut non_finite = false;
        for chunk in order.chunks(self.config.batch_size) {
            let positives = chunk.iter().map(|&x| self.graph.edge(x)).collect();
            let batch = Batch::sample(&self.graph, positives, self.config.loss.negatives_per_positive, &mut self.rng)?;
            let trace = forward(&self.params, &self.graph, &self.config.dropout, &mut self.rng)?;
            let out = total_loss(&trace, &self.params, &batch, &self.config.loss)?;
            let grad = backward(&trace, &self.graph, &self.params, &out.grad_final, &out.grad_initial, self.config.loss.lambda2)?;
            match adam_step(&mut self.adam, &mut self.params, &grad) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => {
                    non_finite = true;
                    break;
                }
                Err(err) => return Err(err),
            }
            sum += out.breakdown;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let loss = LossBreakdown {
            cross: sum.cross / n,
            rank_initial: sum.rank_initial / n,
            rank_final: sum.rank_final / n,
            l2: sum.l2 / n,
            total: sum.total / n,
        };

        let epoch = e + 1;
        let valid = if non_finite { None } else { self.validation_metrics()? };
        match valid {
            Some((hr, _)) => match self.stopper.update(epoch, hr) {
                StopDecision::Improved => {
                    self.best = Some((self.params.embeddings().clone(), self.params.beta()));
                    self.report.best_epoch = Some(epoch);
                }
                StopDecision::Continue => {}
                StopDecision::Stop => self.report.stop_reason = Some(StopReason::EarlyStopping),
            },
            None if !non_finite => {
                self.best = Some((self.params.embeddings().clone(), self.params.beta()));
                self.report.best_epoch = Some(epoch);
            }
            None => {}
        }
        if non_finite {
            self.report.stop_reason = Some(StopReason::NonFiniteGradient);
        } else if self.report.stop_reason.is_none() && epoch >= self.config.max_epochs {
            self.report.stop_reason = Some(StopReason::MaxEpochs);
        }
        self.report.epochs.push(EpochRecord {
            epoch,
            beta,
            batches,
            loss,
            valid_hr: valid.map(|v| v.0),
            valid_ndcg: valid.map(|v| v.1),
            wall_secs: start.elapsed().as_secs_f64(),
        });
        Ok(self.report.epochs.last().unwrap())
    }

    /// Trains until a stopping condition, calling `on_epoch` after each epoch.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&Self) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            self.step_epoch()?;
            on_epoch(self)?;
        }
        Ok(())
    }

    /// Parameters of the best validation epoch (the current ones if no
    /// epoch has completed).
    pub fn best_params(&self) -> Result<ModelParams<T>> {
        match &self.best {
            Some((e, beta)) => ModelParams::new(e.clone(), self.params.num_users(), *beta, self.params.layers()),
            None => Ok(self.params.clone()),
        }
    }

    pub fn finish(self) -> Result<(ModelParams<T>, TrainReport)> {
        Ok((self.best_params()?, self.report))
    }

    fn config_fingerprint(&self) -> Result<String> {
        let mut c = self.config.clone();
        c.max_epochs = 0;
        serde_json::to_string(&c).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        w.u8(std::mem::size_of::<T>() as u8);
        w.string(&self.config_fingerprint()?);
        w.u64(self.params.num_users() as u64);
        w.u64(self.params.num_nodes() as u64);
        w.u64(self.params.width() as u64);
        w.u64(self.params.layers() as u64);
        w.f64(self.params.beta().to_f64_lossless());
        w.matrix(self.params.embeddings());
        w.u64(self.adam.t);
        w.matrix(&self.adam.m);
        w.matrix(&self.adam.v);
        match &self.best {
            Some((e, beta)) => {
                w.u8(1);
                w.f64(beta.to_f64_lossless());
                w.matrix(e);
            }
            None => w.u8(0),
        }
        w.u64(self.stopper.patience as u64);
        w.opt_f64(self.stopper.best);
        w.u64(self.stopper.best_epoch as u64);
        w.u64(self.stopper.since_best as u64);
        w.bytes(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.bytes(&self.rng.get_word_pos().to_le_bytes());
        let r = &self.report;
        w.u64(r.valid_k as u64);
        w.u64(r.epochs.len() as u64);
        for e in &r.epochs {
            w.u64(e.epoch as u64);
            w.f64(e.beta);
            w.u64(e.batches as u64);
            for v in [e.loss.cross, e.loss.rank_initial, e.loss.rank_final, e.loss.l2, e.loss.total] {
                w.f64(v);
            }
            w.opt_f64(e.valid_hr);
            w.opt_f64(e.valid_ndcg);
            w.f64(e.wall_secs);
        }
        w.opt_u64(r.best_epoch.map(|b| b as u64));
        w.u8(r.stop_reason.map_or(0, |s| s.code()));
        Ok(w.0)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.checkpoint_bytes()?)
    }

    /// Restores a run saved with [`Trainer::checkpoint_bytes`]. `config` must
    /// match the saved one except for `max_epochs`.
    pub fn from_checkpoint(split: &'a SplitDataset, config: TrainConfig, bytes: &[u8]) -> Result<Self> {
        let mut t = Self::new(split, config)?;
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        if r.u8()? as usize != std::mem::size_of::<T>() {
            return Err(Error::Format("checkpoint was written with a different scalar type".into()));
        }
        if r.string()? != t.config_fingerprint()? {
            return Err(Error::InvalidArgument(
                "training configuration differs from the checkpoint".into(),
            ));
        }
        let (nu, rows, cols, layers) = (r.u64()?, r.u64()?, r.u64()?, r.u64()?);
        if (nu, rows, cols, layers)
            != (
                t.params.num_users() as u64,
                t.params.num_nodes() as u64,
                t.params.width() as u64,
                t.params.layers() as u64,
            )
        {
            return Err(Error::ShapeMismatch("checkpoint does not match the split".into()));
        }
        let (rows, cols) = (rows as usize, cols as usize);
        let beta = T::from_f64_round(r.f64()?);
        let e = r.matrix(rows, cols)?;
        t.params = ModelParams::new(e, nu as usize, beta, layers as usize)?;
        t.adam.t = r.u64()?;
        t.adam.m = r.matrix(rows, cols)?;
        t.adam.v = r.matrix(rows, cols)?;
        t.best = match r.u8()? {
            0 => None,
            _ => {
                let b = T::from_f64_round(r.f64()?);
                Some((r.matrix(rows, cols)?, b))
            }
        };
        t.stopper = EarlyStopping {
            patience: r.u64()? as usize,
            best: r.opt_f64()?,
            best_epoch: r.u64()? as usize,
            since_best: r.u64()? as usize,
        };
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(stream);
        t.rng.set_word_pos(word_pos);
        let mut report = TrainReport::new(r.u64()? as usize);
        let n = r.u64()?;
        for _ in 0..n {
            let epoch = r.u64()? as usize;
            let beta = r.f64()?;
            let batches = r.u64()? as usize;
            let loss = LossBreakdown {
                cross: r.f64()?,
                rank_initial: r.f64()?,
                rank_final: r.f64()?,
                l2: r.f64()?,
                total: r.f64()?,
            };
            report.epochs.push(EpochRecord {
                epoch,
                beta,
                batches,
                loss,
                valid_hr: r.opt_f64()?,
                valid_ndcg: r.opt_f64()?,
                wall_secs: r.f64()?,
            });
        }
        report.best_epoch = r.opt_u64()?.map(|b| b as usize);
        report.stop_reason = StopReason::from_code(r.u8()?)
            .ok_or_else(|| Error::Format("bad stop reason".into()))?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in checkpoint".into()));
        }
        t.report = report;
        let max = t.config.max_epochs;
        t.set_max_epochs(max);
        Ok(t)
    }

    pub fn load_checkpoint(split: &'a SplitDataset, config: TrainConfig, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(split, config, &bytes)
    }
}

/// Trains to completion and returns the best parameters with the report.
pub fn train<T: Scalar>(split: &SplitDataset, config: TrainConfig) -> Result<(ModelParams<T>, TrainReport)> {
    let mut t = Trainer::new(split, config)?;
    t.run(|_| Ok(()))?;
    t.finish()
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        self.u8(v.is_some() as u8);
        self.f64(v.unwrap_or(0.0));
    }
    fn opt_u64(&mut self, v: Option<u64>) {
        self.u8(v.is_some() as u8);
        self.u64(v.unwrap_or(0));
    }
    fn string(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.bytes(s.as_bytes());
    }
    fn matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        for v in m.as_slice() {
            self.f64(v.to_f64_lossless());
        }
    }
}

struct Reader<'b> {
    buf: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn opt_f64(&mut self) -> Result<Option<f64>> {
        let flag = self.u8()?;
        let v = self.f64()?;
        Ok((flag != 0).then_some(v))
    }
    fn opt_u64(&mut self) -> Result<Option<u64>> {
        let flag = self.u8()?;
        let v = self.u64()?;
        Ok((flag != 0).then_some(v))
    }
    fn string(&mut self) -> Result<String> {
        let n = usize::try_from(self.u64()?).map_err(|_| Error::Format("string length".into()))?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
    fn matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> Result<Matrix<T>> {
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix size".into()))?;
        let mut data = Vec::with_capacity(n.min(self.buf.len() / 8));
        for _ in 0..n {
            data.push(T::from_f64_round(self.f64()?));
        }
        Matrix::from_vec(rows, cols, data)
    }
}
