//! Losses, the optimizer and the alternating training step.

mod adam;
mod losses;
mod train;

pub use adam::{Adam, AdamConfig};
pub use losses::{gan_losses, wgan_losses, Losses, PROB_FLOOR};
pub use train::{
    critic_objective, generator_objective, train_step, CriticObjective, MetricsRow, Precision, RealSampler, Regime,
    TrainConfig, TrainState,
};
