//! Seeded loco-manipulation scenarios with a known solution.
//!
//! Each case starts with an obstacle in each hind-leg column below the robot
//! and takes its goals from a dry run of a hand-written action script: the
//! robot must end within the success radius of where the script left it,
//! with both obstacles pushed at least as far downhill. Replaying the script
//! under the same seed therefore succeeds.

use grain_core::sim::{sim_step, Embodiment, SimParams};
use grain_core::terrain::{Action, Goal, Heightfield, Mode, Obstacle, RobotGeometry, RobotState, Scenario};
use grain_planning::{Decision, PlanError, Policy, SceneNode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SUITE_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCase {
    pub id: usize,
    pub scenario: Scenario,
    /// Sequence that solves the scenario under its seed.
    pub script: Vec<Action>,
}

fn script(k: usize) -> Vec<Action> {
    use Action::*;
    match k % SUITE_SIZE {
        0 => vec![Af, Af, Lp, Af, Af, Rp],
        1 => vec![Rp, Af, Af, Af, Lp, Af],
        2 => vec![Lp, Lp, Af, Af, Rp, Af],
        3 => vec![Af, Rp, Af, Rp, Af, Af],
        4 => vec![Af, Af, Af, Lp, Af, Af],
        5 => vec![Lp, Af, Rp, Af, Rp, Af],
        6 => vec![Rp, Rp, Af, Af, Lp, Af],
        7 => vec![Af, Lp, Af, Lp, Af, Rp],
        8 => vec![Lp, Af, Af, Rp, Rp, Af],
        _ => vec![Af, Rp, Af, Af, Lp, Lp],
    }
}

/// Case `k` of the suite.
pub fn suite_case(k: usize, params: &SimParams, geom: &RobotGeometry) -> SuiteCase {
    let script = script(k);
    let hf = Heightfield::uniform(64, 64, 0.9375, 20f64.to_radians(), 1.5).expect("standard bed is valid");
    let kf = k as f64;
    let robot = RobotState::new(26.0 + (kf * 1.7) % 8.0, 30.0, (kf * 0.37) % 0.4 - 0.2);
    let (lx, ly) = robot.body_to_world(-7.5, -14.0);
    let (rx, ry) = robot.body_to_world(7.5, -14.0);
    let mut scenario = Scenario {
        mode: Mode::LocoManipulation,
        heightfield: hf,
        robot_start: robot,
        obstacles: vec![Obstacle::standard(0, lx, ly), Obstacle::standard(1, rx, ry)],
        obstacle_targets: Vec::new(),
        robot_target: None,
        success_radius: 3.0,
        max_steps: 15,
        rng_seed: 100 + k as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let (mut h, mut r, mut o) = (scenario.heightfield.clone(), robot, scenario.obstacles.clone());
    for &a in &script {
        let s = sim_step(&h, &r, &o, a, geom, params, Some(&mut rng), Embodiment::Robot);
        (h, r, o) = (s.next_heightfield, s.next_robot, s.next_obstacles);
    }
    scenario.robot_target = Some((r.x, r.y));
    scenario.obstacle_targets = o.iter().map(|ob| Goal::Below { y_line: ob.y + 0.5 }).collect();
    SuiteCase {
        id: k,
        scenario,
        script,
    }
}

pub fn loco_manipulation_suite(params: &SimParams, geom: &RobotGeometry) -> Vec<SuiteCase> {
    (0..SUITE_SIZE).map(|k| suite_case(k, params, geom)).collect()
}

/// Replays a fixed action list, then stops.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy(pub Vec<Action>);

impl Policy for ScriptedPolicy {
    fn decide(&mut self, step: usize, _node: &SceneNode) -> Result<Option<Decision>, PlanError> {
        Ok(self.0.get(step).map(|&action| Decision {
            action,
            planned_cost: None,
            predicted: None,
            action_image: None,
        }))
    }
}
