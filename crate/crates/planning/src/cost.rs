//! Task costs over extracted robot and obstacle states.
//!
//! Headings: a robot at `phi = 0` faces +y, while bearings to obstacles come
//! from `atan2` measured from +x. The danger-zone offset therefore compares
//! the bearing with `phi + pi/2`, so an obstacle straight ahead has offset 0.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use grain_core::terrain::{Goal, Mode, Obstacle, RobotState, Scenario};

use crate::{wrap_pi, PlanError};

/// Obstacle distances below this are clamped in the danger-zone cost.
pub const MIN_OBSTACLE_DISTANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    /// Locomotion: robot-to-target weight.
    pub w1: f64,
    /// Locomotion: danger-zone weight.
    pub w2: f64,
    /// Manipulation: obstacle-to-target weight.
    pub w3: f64,
    /// Manipulation: danger-zone weight.
    pub w4: f64,
    /// Loco-manipulation: locomotion share.
    pub w5: f64,
    /// Loco-manipulation: manipulation share.
    pub w6: f64,
    /// Growth rate of the danger penalty.
    pub alpha: f64,
    /// Half-width of the danger sector, rad.
    pub beta: f64,
    /// Per-step discount.
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w1: 0.6,
            w2: 0.4,
            w3: 0.8,
            w4: 0.2,
            w5: 0.4,
            w6: 0.6,
            alpha: 4.0,
            beta: FRAC_PI_4,
            gamma: 0.8,
            horizon: 4,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), PlanError> {
        let w = [self.w1, self.w2, self.w3, self.w4, self.w5, self.w6];
        if !w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(PlanError::Config("cost weights must be finite and >= 0".into()));
        }
        for (name, a, b) in [
            ("w1+w2", self.w1, self.w2),
            ("w3+w4", self.w3, self.w4),
            ("w5+w6", self.w5, self.w6),
        ] {
            if (a + b - 1.0).abs() > 1e-9 {
                return Err(PlanError::Config(format!("{name} must sum to 1, got {}", a + b)));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PlanError::Config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite() && self.beta >= 0.0) {
            return Err(PlanError::Config("alpha and beta must be finite, beta >= 0".into()));
        }
        if self.horizon == 0 {
            return Err(PlanError::Config("horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// Every weight multiplied by `k`; angles, discount and horizon kept.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w1: self.w1 * k,
            w2: self.w2 * k,
            w3: self.w3 * k,
            w4: self.w4 * k,
            w5: self.w5 * k,
            w6: self.w6 * k,
            ..*self
        }
    }
}

/// Robot-to-target distance.
pub fn cost_rt(x_p: (f64, f64), d_r: (f64, f64)) -> f64 {
    (x_p.0 - d_r.0).hypot(x_p.1 - d_r.1)
}

/// Danger-zone multiplier for an obstacle at angular offset `delta`.
pub fn ang_factor(delta: f64, alpha: f64, beta: f64) -> f64 {
    if delta.abs() <= beta {
        (alpha * (beta - delta.abs())).exp()
    } else {
        1.0
    }
}

/// Angle between the robot's facing direction and the bearing to `(ox, oy)`,
/// in `(-pi, pi]`.
pub fn bearing_offset(robot: &RobotState, ox: f64, oy: f64) -> f64 {
    wrap_pi((oy - robot.y).atan2(ox - robot.x) - (robot.phi + FRAC_PI_2))
}

/// Danger-zone cost. The second value counts obstacles whose distance was
/// clamped to [`MIN_OBSTACLE_DISTANCE`].
pub fn cost_rs(robot: &RobotState, obstacles: &[Obstacle], alpha: f64, beta: f64) -> (f64, usize) {
    let mut total = 0.0;
    let mut clamped = 0;
    for o in obstacles {
        let mut dist = (o.x - robot.x).hypot(o.y - robot.y);
        if dist < MIN_OBSTACLE_DISTANCE {
            dist = MIN_OBSTACLE_DISTANCE;
            clamped += 1;
        }
        total += ang_factor(bearing_offset(robot, o.x, o.y), alpha, beta) / dist;
    }
    (total, clamped)
}

/// Summed distance of each obstacle to its paired goal.
pub fn cost_o(obstacles: &[Obstacle], targets: &[Goal]) -> Result<f64, PlanError> {
    if obstacles.len() != targets.len() {
        return Err(PlanError::Contract(format!(
            "{} obstacles for {} targets",
            obstacles.len(),
            targets.len()
        )));
    }
    Ok(obstacles.iter().zip(targets).map(|(o, g)| g.distance(o.x, o.y)).sum())
}

/// Whether an obstacle at `(x, y)` counts as delivered.
pub fn goal_reached(goal: &Goal, x: f64, y: f64, radius: f64) -> bool {
    match *goal {
        Goal::Point { .. } => goal.distance(x, y) <= radius,
        Goal::Below { y_line } => y <= y_line,
    }
}

/// Sub-costs and their mode combination for one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub c_rt: f64,
    pub c_rs: f64,
    pub c_o: f64,
    /// Locomotion combination, zero when the mode has no robot target.
    pub c_l: f64,
    /// Manipulation combination, zero when the mode has no obstacle targets.
    pub c_m: f64,
    pub total: f64,
    /// Obstacles whose danger-zone distance was clamped.
    pub clamped: usize,
}

/// Mode cost of a state. `obstacles[i]` pairs with `scenario.obstacle_targets[i]`;
/// the danger term runs over every obstacle.
pub fn mode_cost(
    mode: Mode,
    robot: &RobotState,
    obstacles: &[Obstacle],
    scenario: &Scenario,
    weights: &CostWeights,
) -> Result<CostBreakdown, PlanError> {
    let n = scenario.obstacle_targets.len();
    if obstacles.len() < n {
        return Err(PlanError::Contract(format!(
            "{} obstacles for {n} targets",
            obstacles.len()
        )));
    }
    let (c_rs, clamped) = cost_rs(robot, obstacles, weights.alpha, weights.beta);
    let mut out = CostBreakdown {
        c_rs,
        clamped,
        ..Default::default()
    };
    if mode.needs_robot_target() {
        let target = scenario
            .robot_target
            .ok_or_else(|| PlanError::Contract(format!("{} scenario without a robot target", mode.tag())))?;
        out.c_rt = cost_rt((robot.x, robot.y), target);
        out.c_l = weights.w1 * out.c_rt + weights.w2 * c_rs;
    }
    if mode.needs_obstacle_targets() {
        out.c_o = cost_o(&obstacles[..n], &scenario.obstacle_targets)?;
        out.c_m = weights.w3 * out.c_o + weights.w4 * c_rs;
    }
    out.total = match mode {
        Mode::Locomotion => out.c_l,
        Mode::Manipulation => out.c_m,
        Mode::LocoManipulation => weights.w5 * out.c_l + weights.w6 * out.c_m,
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distance_examples() {
        assert_eq!(cost_rt((0.0, 0.0), (3.0, 4.0)), 5.0);
        assert_eq!(cost_rt((2.0, 2.0), (2.0, 2.0)), 0.0);
        assert_eq!(cost_rt((1.0, 1.0), (4.0, 5.0)), 5.0);
    }

    #[test]
    fn ang_factor_examples() {
        assert!((ang_factor(0.0, 4.0, FRAC_PI_4) - PI.exp()).abs() < 1e-9);
        assert_eq!(ang_factor(FRAC_PI_4, 4.0, FRAC_PI_4), 1.0);
        assert_eq!(ang_factor(FRAC_PI_2, 4.0, FRAC_PI_4), 1.0);
    }

    #[test]
    fn danger_ahead_and_behind() {
        let r = RobotState::new(10.0, 10.0, 0.0);
        assert_eq!(cost_rs(&r, &[], 4.0, FRAC_PI_4), (0.0, 0));
        let ahead = [Obstacle::standard(0, 10.0, 20.0)];
        assert!((cost_rs(&r, &ahead, 4.0, FRAC_PI_4).0 - PI.exp() / 10.0).abs() < 1e-12);
        let behind = [Obstacle::standard(0, 10.0, 0.0)];
        assert!((cost_rs(&r, &behind, 4.0, FRAC_PI_4).0 - 0.1).abs() < 1e-12);
        // turned left by 90 degrees the robot faces -x
        let left = RobotState::new(10.0, 10.0, FRAC_PI_2);
        let west = [Obstacle::standard(0, 0.0, 10.0)];
        assert!(bearing_offset(&left, 0.0, 10.0).abs() < 1e-12);
        assert!((cost_rs(&left, &west, 4.0, FRAC_PI_4).0 - PI.exp() / 10.0).abs() < 1e-12);
    }

    #[test]
    fn close_obstacles_are_clamped() {
        let r = RobotState::new(10.0, 10.0, 0.0);
        let on_top = [Obstacle::standard(0, 10.0, 10.1)];
        let (c, n) = cost_rs(&r, &on_top, 4.0, FRAC_PI_4);
        assert_eq!(n, 1);
        assert!((c - PI.exp() / 0.5).abs() < 1e-9);
    }

    #[test]
    fn obstacle_cost_examples() {
        let at = [Obstacle::standard(0, 3.0, 4.0)];
        assert_eq!(cost_o(&at, &[Goal::Point { x: 3.0, y: 4.0 }]).unwrap(), 0.0);
        assert_eq!(cost_o(&at, &[Goal::Point { x: 0.0, y: 0.0 }]).unwrap(), 5.0);
        let two = [Obstacle::standard(0, 0.0, 2.0), Obstacle::standard(1, 5.0, 3.0)];
        let goals = [Goal::Point { x: 0.0, y: 0.0 }, Goal::Point { x: 5.0, y: 0.0 }];
        assert_eq!(cost_o(&two, &goals).unwrap(), 5.0);
        assert!(matches!(cost_o(&two, &goals[..1]), Err(PlanError::Contract(_))));
    }

    #[test]
    fn default_weights_are_valid() {
        CostWeights::default().validate().unwrap();
        let bad = CostWeights {
            w1: 0.7,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(CostWeights {
            gamma: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
