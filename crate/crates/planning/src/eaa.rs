//! Effective action adjustment: the legs dig while the body moves, so the
//! action image is re-rendered at the pose halfway through the step.

use grain_core::encoding::{render_action, ActionImage};
use grain_core::raster::Frame;
use grain_core::terrain::{Action, RobotGeometry, RobotState};

use crate::wrap_pi;

/// Midpoint of two headings along the shorter arc, in `(-pi, pi]`. Exactly
/// opposite headings resolve counter-clockwise from `a`.
pub fn heading_midpoint(a: f64, b: f64) -> f64 {
    wrap_pi(a + wrap_pi(b - a) / 2.0)
}

/// Pose halfway between `x0` and `x2`.
pub fn midpoint(x0: &RobotState, x2: &RobotState) -> RobotState {
    RobotState {
        x: (x0.x + x2.x) / 2.0,
        y: (x0.y + x2.y) / 2.0,
        phi: heading_midpoint(x0.phi, x2.phi),
    }
}

/// Action image rendered at the midpoint pose.
pub fn eaa_adjust(
    x0: &RobotState,
    x2: &RobotState,
    geom: &RobotGeometry,
    action: Action,
    frame: &Frame,
) -> ActionImage {
    render_action(frame, &midpoint(x0, x2), geom, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn midpoint_example() {
        let m = midpoint(&RobotState::new(0.0, 0.0, 0.0), &RobotState::new(2.0, 0.0, 0.2));
        assert_eq!((m.x, m.y), (1.0, 0.0));
        assert!((m.phi - 0.1).abs() < 1e-15);
    }

    #[test]
    fn wraparound_goes_through_pi() {
        let m = heading_midpoint(170f64.to_radians(), -170f64.to_radians());
        assert!((m.abs() - PI).abs() < 1e-12, "{m}");
        let m = heading_midpoint(-170f64.to_radians(), 170f64.to_radians());
        assert!((m.abs() - PI).abs() < 1e-12, "{m}");
    }
}
