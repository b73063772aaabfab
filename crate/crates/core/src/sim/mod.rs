//! Ground-truth granular slope dynamics.
//!
//! One step excavates the swept cells, relaxes the bed to its angle of
//! repose, advects obstacles with the resulting flux and, for the legged
//! robot, applies the action's pose change.

mod advect;
mod calibrate;
mod excavate;
mod kinematics;
mod relax;

use rand::Rng;
use thiserror::Error;

pub use advect::{advect_obstacles, footprint_mean, AdvectOutcome};
pub use calibrate::{
    calibrate_interference, interference_ratio, Arrangement, CalibrationGrid, CalibrationRecord, InterferenceLayout,
    CALIBRATION_SPACINGS, INTERFERENCE_TARGETS,
};
pub use excavate::{excavate, leg_footprint, Footprint, FootprintCell};
pub use kinematics::{default_action_table, robot_kinematics, ActionEffect, ActionTable};
pub use relax::{effective_slope, relax, RelaxOutcome, SLOPE_TOLERANCE};

use crate::raster::Frame;
use crate::terrain::{Action, Heightfield, Obstacle, RobotGeometry, RobotState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("invalid simulator parameters: {0}")]
    Params(String),
}

/// Diagnostic emitted by a simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimEvent {
    FootprintOutOfBounds,
    ObstacleLeftBounds(u32),
    RobotLeftBounds,
    RelaxNotConverged,
}

impl SimEvent {
    pub fn tag(&self) -> String {
        match self {
            SimEvent::FootprintOutOfBounds => "footprint-out-of-bounds".into(),
            SimEvent::ObstacleLeftBounds(id) => format!("obstacle-left-bounds:{id}"),
            SimEvent::RobotLeftBounds => "robot-left-bounds".into(),
            SimEvent::RelaxNotConverged => "relax-not-converged".into(),
        }
    }
}

/// Whether the legs belong to the gantry manipulator or the free robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Embodiment {
    Robot,
    Manipulator,
}

impl Embodiment {
    pub fn tag(self) -> &'static str {
        match self {
            Embodiment::Robot => "robot",
            Embodiment::Manipulator => "manipulator",
        }
    }
}

impl std::str::FromStr for Embodiment {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "robot" => Ok(Embodiment::Robot),
            "manipulator" => Ok(Embodiment::Manipulator),
            other => Err(SimError::Params(format!("unknown embodiment '{other}'"))),
        }
    }
}

/// Free constants of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Tangent of the angle of repose.
    pub repose_tan: f64,
    /// Fraction of the excess slope handed over per transfer.
    pub relax_fraction: f64,
    pub max_relax_passes: usize,
    /// Depth removed per fully swept cell, cm.
    pub dig_depth: f64,
    /// Rows between the lower end of a swept strip and the sand it throws.
    pub deposit_offset: usize,
    /// Downhill displacement per unit of mean footprint flux, cm per cm³.
    pub obstacle_mobility: f64,
    /// Fraction of through-flux an obstacle intercepts.
    pub flux_block: f64,
    /// Decay length of an obstacle's flux shadow, cm.
    pub shadow_length: f64,
    pub action_table: ActionTable,
    pub rng_seed: u64,
    /// Ratios achieved by the last interference calibration.
    pub calibration: Option<CalibrationRecord>,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            repose_tan: 21f64.to_radians().tan(),
            relax_fraction: 0.5,
            max_relax_passes: 500,
            dig_depth: 0.8,
            deposit_offset: 2,
            obstacle_mobility: 1.9,
            flux_block: 0.68,
            shadow_length: 3.0,
            action_table: default_action_table(),
            rng_seed: 0,
            calibration: None,
        }
    }
}

impl SimParams {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.repose_tan > 0.0) {
            return Err(SimError::Params("repose_tan must be > 0".into()));
        }
        if !(self.relax_fraction > 0.0 && self.relax_fraction <= 1.0) {
            return Err(SimError::Params("relax_fraction must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.flux_block) {
            return Err(SimError::Params("flux_block must be in [0, 1]".into()));
        }
        if !(self.dig_depth >= 0.0 && self.obstacle_mobility >= 0.0 && self.shadow_length > 0.0) {
            return Err(SimError::Params(
                "dig_depth, obstacle_mobility must be >= 0 and shadow_length > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_heightfield: Heightfield,
    pub next_obstacles: Vec<Obstacle>,
    pub next_robot: RobotState,
    pub flux_map: Vec<f64>,
    pub relax_passes: usize,
    pub events: Vec<SimEvent>,
}

/// One excavation step of `action` performed at `robot`.
#[allow(clippy::too_many_arguments)]
pub fn sim_step<R: Rng + ?Sized>(
    hf: &Heightfield,
    robot: &RobotState,
    obstacles: &[Obstacle],
    action: Action,
    geom: &RobotGeometry,
    params: &SimParams,
    rng: Option<&mut R>,
    embodiment: Embodiment,
) -> StepResult {
    let frame = Frame::of(hf);
    let footprint = leg_footprint(&frame, robot, geom, action);
    let mut result = step_with_cells(hf, obstacles, &footprint.merged(), params);
    result.events.splice(0..0, footprint.events);
    result.next_robot = *robot;
    if embodiment == Embodiment::Robot {
        let moved = robot_kinematics(robot, action, &params.action_table, rng);
        let (x, y, clamped) = hf.bounds().clamp(moved.x, moved.y);
        if clamped {
            result.events.push(SimEvent::RobotLeftBounds);
        }
        result.next_robot = RobotState { x, y, phi: moved.phi };
    }
    result
}

/// Environment part of a step for an explicit weighted set of swept cells.
/// The returned robot pose is a placeholder; callers set it.
pub fn step_with_cells(
    hf: &Heightfield,
    obstacles: &[Obstacle],
    cells: &[(usize, f64)],
    params: &SimParams,
) -> StepResult {
    let frame = Frame::of(hf);
    let mut next = hf.clone();
    excavate::excavate_in_place(&mut next, cells, params);
    let (flux, passes, converged) = relax::relax_in_place(&mut next, params);
    let advect = advect_obstacles(obstacles, &flux, &frame, params);
    let mut events = Vec::new();
    if !converged {
        events.push(SimEvent::RelaxNotConverged);
    }
    events.extend(advect.events);
    StepResult {
        next_heightfield: next,
        next_obstacles: advect.obstacles,
        next_robot: RobotState::new(0.0, 0.0, 0.0),
        flux_map: flux,
        relax_passes: passes,
        events,
    }
}
