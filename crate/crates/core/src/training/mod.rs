//! Losses, exact gradients through the propagation stack, Adam and the
//! training loop.

mod adam;
mod backward;
mod gradcheck;
mod loss;
mod report;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::backward;
pub use gradcheck::{
    analytic_gradient, check_against, finite_difference_check, kink_margin, random_instance, relative_error,
    resample_away_from_kinks, GradCheckConfig, GradCheckReport,
};
pub use loss::{
    cross_entropy_loss, ranking_loss, sigmoid, softplus, total_loss, Batch, LossBreakdown, LossConfig,
    LossOutput,
};
pub use report::{EpochRecord, StopReason, TrainReport};
pub use schedule::{BetaSchedule, EarlyStopping, StopDecision};
pub use trainer::{train, TrainConfig, Trainer, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
