//! Training objectives and the alternating optimization loop.

pub mod losses;
pub mod train;

pub use losses::{
    basic_gan_losses, condition_batch, discriminator_cost, dragan_penalty, feature_matching, generator_cost,
    gp_wgan, wasserstein_core, wgan_gp_discriminator_cost, ConditionedBatch, LinearCritic, NoiseScale,
    PenaltyConfig,
};
pub use train::{
    predict, predict_with, train, train_with_observer, ArchConfig, EpochRecord, Objective, TrainConfig,
    TrainError, TrainedModel,
};
