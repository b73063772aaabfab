use crate::raster::{disc, oriented_rect, Frame};
use crate::sim::leg_footprint;
use crate::terrain::{Action, Heightfield, Obstacle, RobotGeometry, RobotState};

use super::{ActionImage, DepthImage, EncodingError, Result};

/// Top of the height window in cm; heights map linearly from `[0, H_MAX]` to `[-1, 1]`.
pub const H_MAX: f64 = 8.0;

/// Inset of the front marker from the body's front edge, cm.
const MARKER_INSET: f64 = 0.5;

pub fn normalize(h: f64) -> f64 {
    (2.0 * h / H_MAX - 1.0).clamp(-1.0, 1.0)
}

pub fn denormalize(v: f64) -> f64 {
    (v + 1.0) * H_MAX / 2.0
}

/// Height the robot adds above the bed at each touched pixel: the body at
/// `body_height` plus a `marker_height` notch two pixels deep near the front
/// edge, both area-weighted.
pub fn robot_term(frame: &Frame, robot: &RobotState, geom: &RobotGeometry) -> Vec<(usize, f64)> {
    let mut term: Vec<(usize, f64)> =
        oriented_rect(frame, robot, 0.0, 0.0, geom.body_width / 2.0, geom.body_length / 2.0)
            .into_iter()
            .map(|c| (c.idx, c.weight * geom.body_height))
            .collect();
    let depth = 2.0 * frame.cell;
    let v0 = geom.body_length / 2.0 - MARKER_INSET - depth / 2.0;
    for c in oriented_rect(frame, robot, 0.0, v0, geom.body_width / 4.0, depth / 2.0) {
        match term.binary_search_by_key(&c.idx, |t| t.0) {
            Ok(k) => term[k].1 += c.weight * geom.marker_height,
            Err(k) => term.insert(k, (c.idx, c.weight * geom.marker_height)),
        }
    }
    term
}

fn raised(frame: &Frame, robot: Option<&RobotState>, obstacles: &[Obstacle], geom: &RobotGeometry) -> Vec<f64> {
    let mut up = vec![0.0f64; frame.len()];
    for o in obstacles {
        for c in disc(frame, o.x, o.y, o.radius) {
            up[c.idx] = up[c.idx].max(c.weight * o.height);
        }
    }
    if let Some(r) = robot {
        for (i, t) in robot_term(frame, r, geom) {
            up[i] = up[i].max(t);
        }
    }
    up
}

/// Renders the bed with obstacles as area-weighted discs raised by their
/// height and, if given, the robot body raised by `body_height`.
pub fn render_depth(
    hf: &Heightfield,
    robot: Option<&RobotState>,
    obstacles: &[Obstacle],
    geom: &RobotGeometry,
) -> DepthImage {
    let frame = Frame::of(hf);
    let up = raised(&frame, robot, obstacles, geom);
    DepthImage::from_clamped(frame, hf.heights().iter().zip(&up).map(|(h, u)| normalize(h + u)))
}

/// Inverse of [`render_depth`] for known robot and obstacle states.
/// Clamped pixels decode to the window edge.
pub fn decode_heightfield(
    img: &DepthImage,
    robot: Option<&RobotState>,
    obstacles: &[Obstacle],
    geom: &RobotGeometry,
    slope_angle: f64,
) -> Result<Heightfield> {
    let frame = img.frame();
    let up = raised(&frame, robot, obstacles, geom);
    let heights = img
        .values()
        .iter()
        .zip(&up)
        .map(|(v, u)| (denormalize(*v) - u).max(0.0))
        .collect();
    Heightfield::new(img.width(), img.height(), img.cell(), slope_angle, heights)
        .map_err(|e| EncodingError::Shape(e.to_string()))
}

/// Paints every leg strip swept by `action`; see [`ActionImage`] for the
/// colour coding. An action whose strips miss the field gives a blank image.
pub fn render_action(frame: &Frame, robot: &RobotState, geom: &RobotGeometry, action: Action) -> ActionImage {
    let mut img = ActionImage::blank(*frame);
    for c in leg_footprint(frame, robot, geom, action).cells {
        let p = &mut img.pixels[c.idx];
        let w = c.weight.min(1.0 - (p[0] + p[2]));
        p[0] += w * c.phase;
        p[2] += w * (1.0 - c.phase);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::morph::components;

    fn bed() -> Heightfield {
        Heightfield::uniform(64, 64, 0.9375, 0.35, 1.5).unwrap()
    }

    #[test]
    fn flat_field_is_constant() {
        let img = render_depth(&bed(), None, &[], &RobotGeometry::default());
        assert!(img.values().iter().all(|v| *v == normalize(1.5)));
    }

    #[test]
    fn one_obstacle_one_component_with_disc_area() {
        let o = Obstacle::standard(0, 20.3, 31.1);
        let img = render_depth(&bed(), None, &[o], &RobotGeometry::default());
        let base = normalize(1.5);
        let mask: Vec<bool> = img.values().iter().map(|v| *v > base).collect();
        let comps = components(&mask, 64, 64);
        assert_eq!(comps.len(), 1);
        // anti-aliased rim pixels count fractionally
        let area: f64 = img.values().iter().map(|v| (v - base) / (normalize(3.5) - base)).sum();
        let expect = std::f64::consts::PI * (2.0f64 / 0.9375).powi(2);
        assert!((area - expect).abs() / expect < 0.15, "{area} vs {expect}");
        let count = mask.iter().filter(|m| **m).count() as f64;
        assert!(count >= expect * 0.85, "{count}");
    }

    #[test]
    fn decode_inverts_render() {
        let mut hf = bed();
        for (i, h) in hf.heights_mut().iter_mut().enumerate() {
            *h += 0.3 * ((i % 7) as f64 / 7.0);
        }
        let geom = RobotGeometry::default();
        let robot = RobotState::new(30.0, 28.0, 0.4);
        let obs = [Obstacle::standard(0, 12.0, 10.0), Obstacle::standard(1, 50.0, 50.0)];
        let img = render_depth(&hf, Some(&robot), &obs, &geom);
        let back = decode_heightfield(&img, Some(&robot), &obs, &geom, hf.slope_angle()).unwrap();
        for (a, b) in back.heights().iter().zip(hf.heights()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn action_region_counts() {
        let geom = RobotGeometry::default();
        let f = Frame::of(&bed());
        let robot = RobotState::new(30.0, 30.0, 0.3);
        let mask_comps = |a: Action| {
            let img = render_action(&f, &robot, &geom, a);
            let mask: Vec<bool> = img.pixels().iter().map(|p| p[0] + p[2] > 0.0).collect();
            components(&mask, 64, 64).len()
        };
        assert_eq!(mask_comps(Action::Af), 4);
        assert_eq!(mask_comps(Action::Fp), 2);
        assert_eq!(mask_comps(Action::Lp), 2);
        assert_eq!(mask_comps(Action::Lfe), 1);
    }

    #[test]
    fn action_area_matches_strip() {
        let geom = RobotGeometry::default();
        let f = Frame::of(&bed());
        let expect = 12.0 * 1.5 / (0.9375f64 * 0.9375);
        for phi in [0.0, 0.3, 0.785, 2.0] {
            let img = render_action(&f, &RobotState::new(30.0, 30.0, phi), &geom, Action::Lfe);
            let area = img.painted_area();
            assert!((area - expect).abs() / expect < 0.15, "phi {phi}: {area}");
        }
    }

    #[test]
    fn mirrored_action_mirrors_image() {
        let geom = RobotGeometry::default();
        let f = Frame::of(&bed());
        // heading uphill at the field's centre line: mirror about x = 30
        let robot = RobotState::new(30.0, 30.0, 0.0);
        let l = render_action(&f, &robot, &geom, Action::Lfe);
        let r = render_action(&f, &robot, &geom, Action::Rfe);
        for row in 0..64 {
            for col in 0..64 {
                let a = l.pixels()[row * 64 + col];
                let b = r.pixels()[row * 64 + (63 - col)];
                // sampling lattice is not mirror-symmetric: one sample per pixel of slack
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 0.03);
                }
            }
        }
    }

    #[test]
    fn hue_follows_phase() {
        let geom = RobotGeometry::default();
        let f = Frame::of(&bed());
        let robot = RobotState::new(30.0, 30.0, 0.0);
        let img = render_action(&f, &robot, &geom, Action::Lfe);
        // facing uphill the front of the sweep is at the top
        let col = (22.5 / 0.9375) as usize;
        let mut last = f64::INFINITY;
        for row in 0..64 {
            if let Some(p) = img.phase(row * 64 + col) {
                assert!(p <= last + 1e-12);
                last = p;
            }
        }
    }

    #[test]
    fn off_field_action_is_blank() {
        let f = Frame::of(&bed());
        let img = render_action(
            &f,
            &RobotState::new(300.0, 300.0, 0.0),
            &RobotGeometry::default(),
            Action::Af,
        );
        assert!(img.is_blank());
    }
}
