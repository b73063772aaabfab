//! Learned next-frame predictors and the simulator-backed stand-in.
//!
//! The environment predictor is a conditional DDPM over delta images whose
//! noise model is a U-Net; the robot predictor is a U-Net regressing the
//! robot delta in one pass. Both are built on a small f64 tensor library with
//! hand-written reverse-mode gradients.

pub mod diffusion;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod predictor;
pub mod tensor;
pub mod train;
pub mod unet;

use thiserror::Error;

pub use diffusion::{
    ddpm_sample, noise_schedule, q_sample, BetaSchedule, DiffusionConfig, EpsModel, GaussianEps, NoiseSchedule, Sampler,
};
pub use params::ParamStore;
pub use predictor::{infer_f_r, sample_f_e, DecodedScene, LearnedPredictor, OraclePredictor, Predictor, PredictorKind};
pub use tensor::Tensor;
pub use train::{train_f_e, train_f_r, LossCurve, Sample, TrainConfig, Trained};
pub use unet::{UNet, UNetConfig};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("gradient check failed in {block}: relative error {error:.3e}")]
    GradientCheck { block: String, error: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("decoding the state image failed: {0}")]
    Encoding(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
