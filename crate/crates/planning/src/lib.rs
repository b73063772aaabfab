//! Task costs, effective action adjustment and exhaustive receding-horizon
//! planning over predicted depth images.

pub mod cost;
pub mod eaa;
pub mod planner;
pub mod policy;
pub mod rollout;

use thiserror::Error;

pub use cost::{ang_factor, cost_o, cost_rs, cost_rt, goal_reached, mode_cost, CostBreakdown, CostWeights};
pub use eaa::{eaa_adjust, heading_midpoint, midpoint};
pub use planner::{argmin, plan_step, plan_step_reference, sequence_at, sequence_count, PlanOutcome, PlanResult};
pub use policy::{
    execute_policy, is_success, run_episode, Decision, PlanTrace, Planner, Policy, RandomPolicy, SimEnv, StepRecord,
    Termination,
};
pub use rollout::{advance, discounted, observe, rollout, Advanced, PlanContext, Pruned, Rollout, SceneNode};

/// Wraps into `(-pi, pi]` by whole turns, one at a time, so an angle already
/// in range comes back bit for bit.
pub fn wrap_pi(mut a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    while a > PI {
        a -= TAU;
    }
    while a <= -PI {
        a += TAU;
    }
    a
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Encoding(#[from] grain_core::encoding::EncodingError),
    #[error(transparent)]
    Terrain(#[from] grain_core::terrain::TerrainError),
    #[error(transparent)]
    Surrogate(#[from] grain_surrogate::SurrogateError),
}
