use std::f64::consts::{FRAC_PI_4, PI, TAU};

use grain_core::terrain::{Goal, Heightfield, Mode, Obstacle, RobotState, Scenario};
use grain_planning::cost::bearing_offset;
use grain_planning::{ang_factor, cost_rs, mode_cost, CostWeights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mode cost written out term by term from the reference weights.
fn straight_line(mode: Mode, r: &RobotState, obs: &[Obstacle], goals: &[Goal], target: (f64, f64)) -> f64 {
    let mut rs = 0.0;
    for o in obs {
        let mut delta = (o.y - r.y).atan2(o.x - r.x) - (r.phi + PI / 2.0);
        while delta > PI {
            delta -= TAU;
        }
        while delta <= -PI {
            delta += TAU;
        }
        let f = if delta.abs() <= PI / 4.0 {
            (4.0 * (PI / 4.0 - delta.abs())).exp()
        } else {
            1.0
        };
        let d = (o.x - r.x).hypot(o.y - r.y).max(0.5);
        rs += f / d;
    }
    let rt = (r.x - target.0).hypot(r.y - target.1);
    let mut co = 0.0;
    for (o, g) in obs.iter().zip(goals) {
        co += match *g {
            Goal::Point { x, y } => (o.x - x).hypot(o.y - y),
            Goal::Below { y_line } => (o.y - y_line).max(0.0),
        };
    }
    let c_l = 0.6 * rt + 0.4 * rs;
    let c_m = 0.8 * co + 0.2 * rs;
    match mode {
        Mode::Locomotion => c_l,
        Mode::Manipulation => c_m,
        Mode::LocoManipulation => 0.4 * c_l + 0.6 * c_m,
    }
}

fn random_case(rng: &mut ChaCha8Rng, mode: Mode) -> (Scenario, RobotState, Vec<Obstacle>) {
    let hf = Heightfield::uniform(64, 64, 0.9375, 0.35, 1.5).unwrap();
    let robot = RobotState::new(
        rng.gen_range(10.0..50.0),
        rng.gen_range(10.0..50.0),
        rng.gen_range(-PI..PI),
    );
    let obstacles: Vec<Obstacle> = (0..rng.gen_range(1..4))
        .map(|i| Obstacle::standard(i, rng.gen_range(5.0..55.0), rng.gen_range(5.0..55.0)))
        .collect();
    let n = rng.gen_range(1..=obstacles.len());
    let targets = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Goal::Point {
                    x: rng.gen_range(5.0..55.0),
                    y: rng.gen_range(5.0..55.0),
                }
            } else {
                Goal::Below {
                    y_line: rng.gen_range(5.0..40.0),
                }
            }
        })
        .collect();
    let scenario = Scenario {
        mode,
        heightfield: hf,
        robot_start: robot,
        obstacles: obstacles.clone(),
        obstacle_targets: targets,
        robot_target: Some((rng.gen_range(5.0..55.0), rng.gen_range(5.0..55.0))),
        success_radius: 3.0,
        max_steps: 10,
        rng_seed: 0,
    };
    (scenario, robot, obstacles)
}

#[test]
fn ang_factor_point_values() {
    assert!((ang_factor(0.0, 4.0, FRAC_PI_4) - PI.exp()).abs() < 1e-9);
    assert!((ang_factor(0.0, 4.0, FRAC_PI_4) - 23.1407).abs() < 1e-4);
    let at = ang_factor(FRAC_PI_4, 4.0, FRAC_PI_4);
    let inside = ang_factor(FRAC_PI_4 - 1e-14, 4.0, FRAC_PI_4);
    let outside = ang_factor(FRAC_PI_4 + 1e-14, 4.0, FRAC_PI_4);
    assert!((at - 1.0).abs() < 1e-12);
    assert!((inside - at).abs() < 1e-12);
    assert!((outside - at).abs() < 1e-12);
    assert_eq!(ang_factor(PI / 2.0, 4.0, FRAC_PI_4), 1.0);
}

#[test]
fn mode_cost_examples() {
    let hf = Heightfield::uniform(16, 16, 1.0, 0.0, 1.0).unwrap();
    let robot = RobotState::new(0.0, 0.0, 0.0);
    let w = CostWeights::default();
    let loco = Scenario {
        mode: Mode::Locomotion,
        heightfield: hf.clone(),
        robot_start: robot,
        obstacles: vec![],
        obstacle_targets: vec![],
        robot_target: Some((3.0, 4.0)),
        success_radius: 3.0,
        max_steps: 5,
        rng_seed: 0,
    };
    assert!((mode_cost(Mode::Locomotion, &robot, &[], &loco, &w).unwrap().total - 3.0).abs() < 1e-12);

    // an obstacle far enough away that its danger term is negligible
    let far = Obstacle::standard(0, 1e12, -1e12);
    let manip = Scenario {
        mode: Mode::Manipulation,
        obstacles: vec![far],
        obstacle_targets: vec![Goal::Point {
            x: far.x - 6.0,
            y: far.y + 8.0,
        }],
        robot_target: None,
        ..loco.clone()
    };
    let c = mode_cost(Mode::Manipulation, &robot, &[far], &manip, &w).unwrap();
    assert!((c.c_o - 10.0).abs() < 1e-3);
    assert!((c.total - 8.0).abs() < 1e-3);

    let done = Scenario {
        mode: Mode::LocoManipulation,
        obstacles: vec![far],
        obstacle_targets: vec![Goal::Point { x: far.x, y: far.y }],
        robot_target: Some((0.0, 0.0)),
        ..loco
    };
    let c = mode_cost(Mode::LocoManipulation, &robot, &[far], &done, &w).unwrap();
    assert!(c.total.abs() < 1e-12);
}

#[test]
fn mode_costs_match_a_straight_line_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = CostWeights::default();
    for case in 0..20 {
        let mode = [Mode::Locomotion, Mode::Manipulation, Mode::LocoManipulation][case % 3];
        let (scenario, robot, obstacles) = random_case(&mut rng, mode);
        let got = mode_cost(mode, &robot, &obstacles, &scenario, &w).unwrap().total;
        let want = straight_line(
            mode,
            &robot,
            &obstacles,
            &scenario.obstacle_targets,
            scenario.robot_target.unwrap(),
        );
        assert_eq!(got.to_bits(), want.to_bits(), "case {case} {mode:?}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn ang_factor_is_at_least_one(delta in -PI..PI) {
        prop_assert!(ang_factor(delta, 4.0, FRAC_PI_4) >= 1.0);
    }

    #[test]
    fn ang_factor_decreases_inside_the_sector(a in 0.0..FRAC_PI_4, b in 0.0..FRAC_PI_4) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(ang_factor(lo, 4.0, FRAC_PI_4) > ang_factor(hi, 4.0, FRAC_PI_4));
    }

    #[test]
    fn danger_cost_is_rotation_invariant(
        x in 10.0..50.0f64, y in 10.0..50.0f64, phi in -PI..PI, turn in -PI..PI,
        offs in proptest::collection::vec((-15.0..15.0f64, -15.0..15.0f64), 1..4),
    ) {
        prop_assume!(offs.iter().all(|(dx, dy)| dx.hypot(*dy) > 1.0));
        let robot = RobotState::new(x, y, phi);
        let obs: Vec<Obstacle> = offs.iter().enumerate().map(|(i, (dx, dy))| Obstacle::standard(i as u32, x + dx, y + dy)).collect();
        let (s, c) = turn.sin_cos();
        let turned = RobotState::new(x, y, phi + turn);
        let obs_t: Vec<Obstacle> = offs.iter().enumerate()
            .map(|(i, (dx, dy))| Obstacle::standard(i as u32, x + dx * c - dy * s, y + dx * s + dy * c))
            .collect();
        // keep clear of the sector edge, where rounding can flip the branch
        for o in &obs {
            prop_assume!((bearing_offset(&robot, o.x, o.y).abs() - FRAC_PI_4).abs() > 1e-6);
        }
        let a = cost_rs(&robot, &obs, 4.0, FRAC_PI_4).0;
        let b = cost_rs(&turned, &obs_t, 4.0, FRAC_PI_4).0;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }
}
