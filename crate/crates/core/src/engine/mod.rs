//! Optimization: losses, ADAM, temperature schedules and the training loop.

mod adam;
mod loss;
mod model;
mod schedule;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{mse_loss, total_loss};
pub use model::{Model, SamplerKind, SamplerState, MB_JITTER, MB_STEP, MB_THRESHOLD, PG_STEP, PG_THRESHOLD};
pub use schedule::{temperature, TauSchedule};
pub use train::{evaluate, evaluate_with, score, train, EpochRecord, Reduction, TrainConfig, TrainOutcome, TrainSource};
