//! Losses, learning-rate schedule, AdamW and the training loop.

mod fit;
mod loss;
mod optim;
mod schedule;

pub use fit::{fit, par_map_ordered, predict_parallel, worker_count, EpochLog, FitOutcome, StopReason, TrainReport};
pub use loss::{
    mae_loss, mse_loss, mse_per_category, uncertainty_loss, uncertainty_loss_shard, UncertaintyState,
};
pub use optim::AdamW;
pub use schedule::{clip_gradients, global_norm, lr_at, TrainConfig};
