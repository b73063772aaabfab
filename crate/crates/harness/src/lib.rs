//! Plumbing around the simulator, predictors and planner: text formats,
//! dataset generation, evaluation, sweeps and plots.

pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod plot;
pub mod suite;
pub mod sweeps;
pub mod textfmt;

use thiserror::Error;

pub use checkpoint::{load_model, save_model, Model, ModelKind};
pub use dataset::{gen_dataset, load_samples, DatasetManifest, IndexRow, TrialSpec};
pub use eval::{evaluate, EvalReport, TrialResult};
pub use suite::{loco_manipulation_suite, ScriptedPolicy, SuiteCase};
pub use sweeps::{sweep_actions, sweep_interference, ActionStats, InterferenceRow};
pub use textfmt::{parse_params, parse_scenario, write_params, write_scenario};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Terrain(#[from] grain_core::terrain::TerrainError),
    #[error(transparent)]
    Sim(#[from] grain_core::sim::SimError),
    #[error(transparent)]
    Encoding(#[from] grain_core::encoding::EncodingError),
    #[error(transparent)]
    Surrogate(#[from] grain_surrogate::SurrogateError),
    #[error(transparent)]
    Plan(#[from] grain_planning::PlanError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
