//! Image-space rollouts through a predictor.

use grain_core::encoding::{
    compose_extracted, extract_obstacles, extract_robot, render_action, track_obstacles, ActionImage, DepthImage,
    EncodingError, PixelSet, TRACK_GATE,
};
use grain_core::terrain::{Action, Obstacle, RobotGeometry, RobotState, Scenario};
use grain_surrogate::{Predictor, SurrogateError};

use crate::cost::{mode_cost, CostBreakdown, CostWeights};
use crate::eaa::eaa_adjust;
use crate::PlanError;

/// Everything a rollout needs besides the start image.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub predictor: &'a dyn Predictor,
    pub scenario: &'a Scenario,
    pub weights: &'a CostWeights,
    pub geom: &'a RobotGeometry,
    pub use_eaa: bool,
}

/// A depth image with the states read off it. Obstacles keep the order and
/// ids of the scenario; an obstacle that drops out of view keeps its last
/// known position.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub image: DepthImage,
    pub robot: RobotState,
    pub robot_pixels: PixelSet,
    pub obstacles: Vec<Obstacle>,
}

/// Reads robot and obstacles off `image`, matching obstacles to `previous`.
pub fn observe(image: DepthImage, geom: &RobotGeometry, previous: &[Obstacle]) -> Result<SceneNode, EncodingError> {
    let (robot, robot_pixels) = extract_robot(&image, geom)?;
    let detected = extract_obstacles(&image, &robot_pixels);
    let obstacles = track_obstacles(previous, &detected, TRACK_GATE).obstacles;
    Ok(SceneNode {
        image,
        robot,
        robot_pixels,
        obstacles,
    })
}

/// One predicted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Advanced {
    pub node: SceneNode,
    /// Action image handed to the environment predictor.
    pub action_image: ActionImage,
    pub cost: CostBreakdown,
}

/// Why a predicted step could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub reason: String,
}

/// Predicts the node after `action`. Decoding failures prune the branch;
/// every other error is returned as is.
pub fn advance(ctx: &PlanContext, node: &SceneNode, action: Action) -> Result<Result<Advanced, Pruned>, PlanError> {
    match try_advance(ctx, node, action) {
        Ok(a) => Ok(Ok(a)),
        Err(Step::Pruned(reason)) => Ok(Err(Pruned { reason })),
        Err(Step::Fatal(e)) => Err(e),
    }
}

enum Step {
    Pruned(String),
    Fatal(PlanError),
}

impl From<EncodingError> for Step {
    fn from(e: EncodingError) -> Self {
        match e {
            EncodingError::NoRobot | EncodingError::AmbiguousRobot(_) => Step::Pruned(e.to_string()),
            other => Step::Fatal(other.into()),
        }
    }
}

impl From<SurrogateError> for Step {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Encoding(msg) => Step::Pruned(msg),
            other => Step::Fatal(other.into()),
        }
    }
}

fn try_advance(ctx: &PlanContext, node: &SceneNode, action: Action) -> Result<Advanced, Step> {
    let frame = node.image.frame();
    let a_img = render_action(&frame, &node.robot, ctx.geom, action);
    let robot_delta = ctx.predictor.predict_robot(&node.image, &a_img)?;
    let robot_img = robot_delta.apply(&node.image)?;
    let (x2, p_next) = extract_robot(&robot_img, ctx.geom)?;
    let action_image = if ctx.use_eaa {
        eaa_adjust(&node.robot, &x2, ctx.geom, action, &frame)
    } else {
        a_img
    };
    let env_delta = ctx.predictor.predict_env(&node.image, &action_image)?;
    let next = compose_extracted(&node.image, &env_delta, &robot_img, &node.robot_pixels, &p_next)?;
    let node = observe(next, ctx.geom, &node.obstacles)?;
    let cost = mode_cost(
        ctx.scenario.mode,
        &node.robot,
        &node.obstacles,
        ctx.scenario,
        ctx.weights,
    )
    .map_err(Step::Fatal)?;
    Ok(Advanced {
        node,
        action_image,
        cost,
    })
}

/// Result of rolling one action sequence forward.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Discounted cost, infinite when a step was pruned.
    pub cost: f64,
    /// Steps that were predicted, in order.
    pub steps: Vec<Advanced>,
    pub pruned: Option<Pruned>,
}

/// `acc + gamma^t * c`, the accumulation every rollout path uses.
pub fn accumulate(acc: f64, gamma: f64, t: usize, c: f64) -> f64 {
    acc + gamma.powi(t as i32) * c
}

/// Discounted sum over per-step costs.
pub fn discounted(costs: &[f64], gamma: f64) -> f64 {
    costs
        .iter()
        .enumerate()
        .fold(0.0, |acc, (t, c)| accumulate(acc, gamma, t, *c))
}

/// Rolls `actions` forward from `root`, summing discounted post-action costs.
pub fn rollout(ctx: &PlanContext, root: &SceneNode, actions: &[Action]) -> Result<Rollout, PlanError> {
    let mut steps: Vec<Advanced> = Vec::with_capacity(actions.len());
    let mut acc = 0.0;
    for (t, &a) in actions.iter().enumerate() {
        let from = steps.last().map_or(root, |s| &s.node);
        match advance(ctx, from, a)? {
            Ok(step) => {
                acc = accumulate(acc, ctx.weights.gamma, t, step.cost.total);
                steps.push(step);
            }
            Err(p) => {
                return Ok(Rollout {
                    cost: f64::INFINITY,
                    steps,
                    pruned: Some(p),
                })
            }
        }
    }
    Ok(Rollout {
        cost: acc,
        steps,
        pruned: None,
    })
}
