use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::loss::LossBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
    NonFiniteGradient,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EarlyStopping => "early-stopping",
            Self::MaxEpochs => "max-epochs",
            Self::NonFiniteGradient => "non-finite-gradient",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::EarlyStopping => 1,
            Self::MaxEpochs => 2,
            Self::NonFiniteGradient => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Option<Self>> {
        match c {
            0 => Some(None),
            1 => Some(Some(Self::EarlyStopping)),
            2 => Some(Some(Self::MaxEpochs)),
            3 => Some(Some(Self::NonFiniteGradient)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub beta: f64,
    pub batches: usize,
    /// Per-batch means of each term.
    pub loss: LossBreakdown,
    pub valid_hr: Option<f64>,
    pub valid_ndcg: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub valid_k: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stop_reason: Option<StopReason>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

impl TrainReport {
    pub fn new(valid_k: usize) -> Self {
        Self {
            valid_k,
            epochs: Vec::new(),
            best_epoch: None,
            stop_reason: None,
        }
    }

    /// One row per epoch. Wall time is left out so that identical runs give
    /// identical files; see [`TrainReport::timing_tsv`].
    pub fn to_tsv(&self) -> String {
        let k = self.valid_k;
        let mut out = format!(
            "epoch\tbeta\tbatches\tloss_cross\tloss_rank_initial\tloss_rank_final\tloss_l2\tloss_total\tvalid_hr@{k}\tvalid_ndcg@{k}\n"
        );
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.beta,
                r.batches,
                r.loss.cross,
                r.loss.rank_initial,
                r.loss.rank_final,
                r.loss.l2,
                r.loss.total,
                opt(r.valid_hr),
                opt(r.valid_ndcg)
            );
        }
        if let Some(b) = self.best_epoch {
            let _ = writeln!(out, "# best_epoch\t{b}");
        }
        if let Some(s) = self.stop_reason {
            let _ = writeln!(out, "# stop_reason\t{}", s.as_str());
        }
        out
    }

    pub fn timing_tsv(&self) -> String {
        let mut out = String::from("epoch\twall_secs\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{}\t{:.6}", r.epoch, r.wall_secs);
        }
        out
    }
}
