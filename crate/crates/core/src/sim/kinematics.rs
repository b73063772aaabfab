use rand::Rng;
use rand_distr::StandardNormal;

use crate::terrain::{wrap_angle, Action, RobotState};

/// Nominal body-frame pose change of one action plus its noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionEffect {
    /// Lateral shift in cm (positive to the robot's right).
    pub dx: f64,
    /// Forward shift in cm.
    pub dy: f64,
    /// Heading change in rad (positive counter-clockwise).
    pub dphi: f64,
    pub std_dx: f64,
    pub std_dy: f64,
    pub std_dphi: f64,
}

impl ActionEffect {
    pub const fn new(dx: f64, dy: f64, dphi: f64, std_dx: f64, std_dy: f64, std_dphi: f64) -> Self {
        Self {
            dx,
            dy,
            dphi,
            std_dx,
            std_dy,
            std_dphi,
        }
    }
}

/// Per-action effects indexed by [`Action::index`].
pub type ActionTable = [ActionEffect; 6];

/// Default table. All four legs drive the robot furthest forward; a left or
/// right pair yaws it hardest, away from the digging side; the front-only
/// actions barely move it.
pub fn default_action_table() -> ActionTable {
    [
        ActionEffect::new(0.15, 0.3, -0.08, 0.05, 0.08, 0.01),
        ActionEffect::new(-0.15, 0.3, 0.08, 0.05, 0.08, 0.01),
        ActionEffect::new(0.4, 1.2, -0.35, 0.1, 0.15, 0.03),
        ActionEffect::new(-0.4, 1.2, 0.35, 0.1, 0.15, 0.03),
        ActionEffect::new(0.0, 0.6, 0.0, 0.05, 0.1, 0.01),
        ActionEffect::new(0.0, 3.0, 0.0, 0.15, 0.3, 0.02),
    ]
}

/// Applies the action's body-frame delta. With `rng` set, Gaussian noise is
/// added per component; without it the nominal delta is used.
pub fn robot_kinematics<R: Rng + ?Sized>(
    robot: &RobotState,
    action: Action,
    table: &ActionTable,
    rng: Option<&mut R>,
) -> RobotState {
    let e = table[action.index()];
    let (mut dx, mut dy, mut dphi) = (e.dx, e.dy, e.dphi);
    if let Some(rng) = rng {
        let n: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        dx += e.std_dx * n[0];
        dy += e.std_dy * n[1];
        dphi += e.std_dphi * n[2];
    }
    let (x, y) = robot.body_to_world(dx, dy);
    RobotState {
        x,
        y,
        phi: wrap_angle(robot.phi + dphi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_four_without_noise_moves_forward() {
        let table = default_action_table();
        let r = RobotState::new(30.0, 20.0, 0.0);
        let n = robot_kinematics::<ChaCha8Rng>(&r, Action::Af, &table, None);
        assert_eq!((n.x, n.y, n.phi), (30.0, 23.0, 0.0));
    }

    #[test]
    fn pairs_mirror_each_other() {
        let t = default_action_table();
        let (lp, rp) = (t[Action::Lp.index()], t[Action::Rp.index()]);
        assert_eq!((lp.dx, lp.dy, lp.dphi), (-rp.dx, rp.dy, -rp.dphi));
        let (l, r) = (t[Action::Lfe.index()], t[Action::Rfe.index()]);
        assert_eq!((l.dx, l.dy, l.dphi), (-r.dx, r.dy, -r.dphi));
    }

    #[test]
    fn default_table_orderings() {
        let t = default_action_table();
        let af = t[Action::Af.index()];
        for a in Action::ALL {
            let e = t[a.index()];
            if a != Action::Af {
                assert!(af.dy.abs() > e.dy.abs());
            }
            if !matches!(a, Action::Lp | Action::Rp) {
                assert!(t[Action::Lp.index()].dphi.abs() > e.dphi.abs());
            }
            if matches!(a, Action::Fp | Action::Lfe | Action::Rfe) {
                for c in [e.dx, e.dy, e.dphi] {
                    assert!(c.abs() < 0.25 * af.dy);
                }
            }
        }
        assert_eq!(t[Action::Lp.index()].dphi, -t[Action::Rp.index()].dphi);
    }

    #[test]
    fn noise_is_seeded() {
        let t = default_action_table();
        let r = RobotState::new(30.0, 20.0, 0.3);
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let x = robot_kinematics(&r, Action::Lp, &t, Some(&mut a));
        let y = robot_kinematics(&r, Action::Lp, &t, Some(&mut b));
        assert_eq!(x, y);
    }
}
