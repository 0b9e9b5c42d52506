//! Teacher-forced training, input-noise injection, and autoregressive
//! rollout of trained surrogates.

mod config;
mod loss;
mod noise;
mod rollout;
mod run;

pub use config::{NoiseMode, TrainConfig, NOISE_EPS};
pub use loss::{loss_terms, LossTerms};
pub use noise::{adaptive_noise, increment_std, perturb_increments, uniform_noise, NoiseReport};
pub use rollout::{
    rollout, EdgeAttention, NetPredictor, Prediction, Predictor, RolloutResult, ZeroPredictor,
};
pub use run::{train, CurvePoint, TrainOutcome};
