use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant growth of the `tanh` scale: `initial * factor^(epoch / every)`,
/// capped at `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaSchedule {
    pub initial: f64,
    pub factor: f64,
    pub every: usize,
    pub max: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            factor: std::f64::consts::SQRT_2,
            every: 10,
            max: 64.0,
        }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.factor >= 1.0 && self.every > 0 && self.max >= self.initial) {
            return Err(Error::InvalidArgument(format!("invalid beta schedule {self:?}")));
        }
        Ok(())
    }

    /// Scale for the 0-based `epoch`.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        let steps = i32::try_from(epoch / self.every).unwrap_or(i32::MAX);
        (self.initial * self.factor.powi(steps)).min(self.max)
    }
}

/// Tracks the best validation metric; training stops after `patience`
/// consecutive epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    /// 1-based epoch of the best metric.
    pub best_epoch: usize,
    pub since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, metric: f64) -> StopDecision {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}
