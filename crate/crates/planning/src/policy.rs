//! Closed-loop execution against the ground-truth simulator.

use std::fmt;
use std::io::Write;
use std::path::Path;

use grain_core::encoding::{render_depth, write_action_ppm, write_depth_pgm, ActionImage, DepthImage};
use grain_core::sim::{sim_step, Embodiment, SimEvent, SimParams};
use grain_core::terrain::{Action, Heightfield, Mode, Obstacle, RobotGeometry, RobotState, Scenario};
use grain_surrogate::Predictor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::{goal_reached, mode_cost, CostBreakdown, CostWeights};
use crate::planner::{plan_step, PlanResult};
use crate::rollout::{observe, PlanContext, SceneNode};
use crate::PlanError;

/// Consecutive non-improving steps before a run is abandoned.
pub const NO_IMPROVEMENT_PATIENCE: usize = 3;

/// Margin by which the cost must drop to count as progress.
const IMPROVEMENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Success,
    MaxSteps,
    OutOfBounds,
    NoImprovement,
}

impl Termination {
    pub fn tag(self) -> &'static str {
        match self {
            Termination::Success => "success",
            Termination::MaxSteps => "max_steps",
            Termination::OutOfBounds => "out_of_bounds",
            Termination::NoImprovement => "no_improvement",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One executed action.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    /// Discounted cost of the chosen sequence; `None` for policies that do
    /// not plan.
    pub planned_cost: Option<f64>,
    /// Predicted image after the action, if the policy predicts.
    pub predicted: Option<DepthImage>,
    /// Action image given to the environment predictor.
    pub action_image: Option<ActionImage>,
    /// Rendered ground truth after the action.
    pub observed: DepthImage,
    /// Ground-truth states after the action.
    pub robot: RobotState,
    pub obstacles: Vec<Obstacle>,
    pub costs: CostBreakdown,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrace {
    pub mode: Mode,
    pub records: Vec<StepRecord>,
    pub termination: Termination,
    pub final_robot: RobotState,
    pub final_obstacles: Vec<Obstacle>,
    /// Final robot-to-target distance, for modes with a robot target.
    pub robot_error: Option<f64>,
    /// Mean final obstacle-to-goal distance, for modes with obstacle targets.
    pub obstacle_error: Option<f64>,
}

impl PlanTrace {
    pub fn succeeded(&self) -> bool {
        self.termination == Termination::Success
    }

    /// Headline error: the obstacle error where obstacles have goals, else
    /// the robot error.
    pub fn mae(&self) -> f64 {
        self.obstacle_error.or(self.robot_error).unwrap_or(0.0)
    }

    /// One CSV row per step: action, sub-costs, robot pose and every
    /// obstacle position.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let n = self.final_obstacles.len();
        write!(out, "step,action,c_rt,c_rs,c_o,mode_cost,robot_x,robot_y,robot_phi")?;
        for i in 0..n {
            write!(out, ",obs{i}_x,obs{i}_y")?;
        }
        writeln!(out)?;
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.action,
                r.costs.c_rt,
                r.costs.c_rs,
                r.costs.c_o,
                r.costs.total,
                r.robot.x,
                r.robot.y,
                r.robot.phi
            )?;
            for o in &r.obstacles {
                write!(out, ",{},{}", o.x, o.y)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Writes `step_NNN_observed.pgm`, plus the predicted frame and the
    /// adjusted action image where the policy produced them.
    pub fn write_snapshots(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let io = |e: grain_core::encoding::EncodingError| std::io::Error::other(e.to_string());
        for r in &self.records {
            let mut f = std::io::BufWriter::new(std::fs::File::create(
                dir.join(format!("step_{:03}_observed.pgm", r.step)),
            )?);
            write_depth_pgm(&r.observed, &mut f).map_err(io)?;
            if let Some(p) = &r.predicted {
                let mut f = std::io::BufWriter::new(std::fs::File::create(
                    dir.join(format!("step_{:03}_predicted.pgm", r.step)),
                )?);
                write_depth_pgm(p, &mut f).map_err(io)?;
            }
            if let Some(a) = &r.action_image {
                let mut f = std::io::BufWriter::new(std::fs::File::create(
                    dir.join(format!("step_{:03}_action.ppm", r.step)),
                )?);
                write_action_ppm(a, &mut f).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// A policy's choice for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub planned_cost: Option<f64>,
    pub predicted: Option<DepthImage>,
    pub action_image: Option<ActionImage>,
}

/// Picks actions from observations. `None` means nothing is worth doing.
pub trait Policy {
    fn decide(&mut self, step: usize, observation: &SceneNode) -> Result<Option<Decision>, PlanError>;
}

/// Receding-horizon planner over a predictor.
pub struct Planner<'a> {
    pub ctx: PlanContext<'a>,
}

impl Policy for Planner<'_> {
    fn decide(&mut self, _step: usize, observation: &SceneNode) -> Result<Option<Decision>, PlanError> {
        Ok(match plan_step(&self.ctx, observation)? {
            PlanResult::Planned(o) => Some(Decision {
                action: o.best_action,
                planned_cost: Some(o.best_cost),
                predicted: Some(o.first_step.node.image),
                action_image: Some(o.first_step.action_image),
            }),
            PlanResult::NoImprovement { .. } => None,
        })
    }
}

/// Uniformly random actions.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, _step: usize, _observation: &SceneNode) -> Result<Option<Decision>, PlanError> {
        Ok(Some(Decision {
            action: Action::ALL[self.rng.gen_range(0..6)],
            planned_cost: None,
            predicted: None,
            action_image: None,
        }))
    }
}

/// Whether the ground-truth state meets the scenario's goals.
pub fn is_success(scenario: &Scenario, robot: &RobotState, obstacles: &[Obstacle]) -> bool {
    let r = scenario.success_radius;
    let robot_ok = match scenario.robot_target {
        Some((tx, ty)) if scenario.mode.needs_robot_target() => (robot.x - tx).hypot(robot.y - ty) <= r,
        _ => true,
    };
    let obstacles_ok = !scenario.mode.needs_obstacle_targets()
        || scenario
            .obstacle_targets
            .iter()
            .zip(obstacles)
            .all(|(g, o)| goal_reached(g, o.x, o.y, r));
    robot_ok && obstacles_ok
}

/// Ground-truth simulator the policy acts in.
#[derive(Debug, Clone)]
pub struct SimEnv<'a> {
    pub params: &'a SimParams,
    pub geom: &'a RobotGeometry,
}

/// Runs the planner in the simulator until a termination condition.
pub fn execute_policy(
    env: SimEnv,
    predictor: &dyn Predictor,
    scenario: &Scenario,
    weights: &CostWeights,
    use_eaa: bool,
) -> Result<PlanTrace, PlanError> {
    let mut planner = Planner {
        ctx: PlanContext {
            predictor,
            scenario,
            weights,
            geom: env.geom,
            use_eaa,
        },
    };
    run_episode(env, &mut planner, scenario, weights)
}

/// Runs any policy in the simulator. The robot's motion noise is drawn from
/// the scenario seed. A run ends on success, when the robot or a
/// manipulated obstacle leaves the field, after
/// [`NO_IMPROVEMENT_PATIENCE`] steps without a new lowest ground-truth cost,
/// when the policy has no action to offer, or at the step limit.
pub fn run_episode(
    env: SimEnv,
    policy: &mut dyn Policy,
    scenario: &Scenario,
    weights: &CostWeights,
) -> Result<PlanTrace, PlanError> {
    scenario.validate()?;
    weights.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let mut hf: Heightfield = scenario.heightfield.clone();
    let mut robot = scenario.robot_start;
    let mut obstacles = scenario.obstacles.clone();
    let mut tracked = scenario.obstacles.clone();
    let mut records = Vec::new();
    let mut best = mode_cost(scenario.mode, &robot, &obstacles, scenario, weights)?.total;
    let mut stagnant = 0;
    let managed: Vec<u32> = scenario.manipulated().iter().map(|o| o.id).collect();

    let termination = 'run: {
        if is_success(scenario, &robot, &obstacles) {
            break 'run Termination::Success;
        }
        for step in 0..scenario.max_steps {
            let image = render_depth(&hf, Some(&robot), &obstacles, env.geom);
            let seen = observe(image, env.geom, &tracked)?;
            let Some(decision) = policy.decide(step, &seen)? else {
                break 'run Termination::NoImprovement;
            };
            tracked = seen.obstacles;
            let out = sim_step(
                &hf,
                &robot,
                &obstacles,
                decision.action,
                env.geom,
                env.params,
                Some(&mut rng),
                Embodiment::Robot,
            );
            hf = out.next_heightfield;
            robot = out.next_robot;
            obstacles = out.next_obstacles;
            let costs = mode_cost(scenario.mode, &robot, &obstacles, scenario, weights)?;
            let left = out.events.iter().any(|e| match e {
                SimEvent::RobotLeftBounds => true,
                SimEvent::ObstacleLeftBounds(id) => managed.contains(id),
                _ => false,
            });
            records.push(StepRecord {
                step,
                action: decision.action,
                planned_cost: decision.planned_cost,
                predicted: decision.predicted,
                action_image: decision.action_image,
                observed: render_depth(&hf, Some(&robot), &obstacles, env.geom),
                robot,
                obstacles: obstacles.clone(),
                costs,
                events: out.events,
            });
            if left {
                break 'run Termination::OutOfBounds;
            }
            if is_success(scenario, &robot, &obstacles) {
                break 'run Termination::Success;
            }
            if costs.total < best - IMPROVEMENT_EPS {
                best = costs.total;
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= NO_IMPROVEMENT_PATIENCE {
                    break 'run Termination::NoImprovement;
                }
            }
        }
        Termination::MaxSteps
    };

    let robot_error = match scenario.robot_target {
        Some((tx, ty)) if scenario.mode.needs_robot_target() => Some((robot.x - tx).hypot(robot.y - ty)),
        _ => None,
    };
    let obstacle_error = if scenario.mode.needs_obstacle_targets() {
        let goals = &scenario.obstacle_targets;
        let sum: f64 = goals.iter().zip(&obstacles).map(|(g, o)| g.distance(o.x, o.y)).sum();
        Some(sum / goals.len() as f64)
    } else {
        None
    };
    Ok(PlanTrace {
        mode: scenario.mode,
        records,
        termination,
        final_robot: robot,
        final_obstacles: obstacles,
        robot_error,
        obstacle_error,
    })
}
