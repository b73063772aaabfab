//! Recovering robot pose and obstacle positions from a depth image.
//!
//! Both extractors work on a white top-hat of the height map, which removes
//! the bed and keeps what stands up from it. The robot window is wider than
//! the body so the whole body survives; the obstacle window is wider than a
//! disc but narrower than the body.

use std::f64::consts::FRAC_PI_2;

use crate::terrain::{wrap_angle, Obstacle, RobotGeometry, RobotState, DEFAULT_OBSTACLE_RADIUS};

use super::morph::{box_mean, components, dilate_mask, distance_inside, split_touching, top_hat};
use super::{DepthImage, EncodingError, PixelSet, Result};

/// Minimum rise above the bed, cm, for a pixel to count as obstacle.
pub const OBSTACLE_THRESHOLD: f64 = 1.0;
/// Largest centroid shift, cm, accepted when matching obstacles between frames.
pub const TRACK_GATE: f64 = 5.0;
/// Fraction of the body height a pixel must rise to count as robot.
const ROBOT_FRACTION: f64 = 0.6;
const OBSTACLE_WINDOW: usize = 7;
const MIN_OBSTACLE_PIXELS: usize = 3;

fn robot_window(geom: &RobotGeometry, cell: f64) -> usize {
    ((geom.body_width / cell).ceil() as usize + 4) | 1
}

fn ring(region: &[usize], w: usize, h: usize, blocked: &[bool]) -> Vec<usize> {
    let mut m = vec![false; w * h];
    for &i in region {
        m[i] = true;
    }
    let grown = dilate_mask(&m, w, h);
    (0..w * h).filter(|&i| grown[i] && !m[i] && !blocked[i]).collect()
}

/// Pose and pixel set of the robot body. The position is the area-weighted
/// centroid, the heading the principal axis, signed by the front marker.
pub fn extract_robot(img: &DepthImage, geom: &RobotGeometry) -> Result<(RobotState, PixelSet)> {
    let (w, h, cell) = (img.width(), img.height(), img.cell());
    let th = top_hat(&img.heights_cm(), w, h, robot_window(geom, cell));
    let mask: Vec<bool> = th.iter().map(|t| *t > ROBOT_FRACTION * geom.body_height).collect();
    let comps = components(&mask, w, h);
    let largest = comps.iter().map(|c| c.len()).max().ok_or(EncodingError::NoRobot)?;
    let tied = comps.iter().filter(|c| c.len() == largest).count();
    if tied > 1 {
        return Err(EncodingError::AmbiguousRobot(tied));
    }
    let body = comps.into_iter().find(|c| c.len() == largest).expect("largest exists");

    let mut pixels = body.clone();
    pixels.extend(ring(&body, w, h, &vec![false; w * h]));
    let at = |i: usize| (((i % w) as f64 + 0.5) * cell, ((i / w) as f64 + 0.5) * cell);
    let weight = |i: usize| (th[i] / geom.body_height).clamp(0.0, 1.0);
    let total: f64 = pixels.iter().map(|&i| weight(i)).sum();
    let (mx, my) = pixels.iter().fold((0.0, 0.0), |a, &i| {
        let (x, y) = at(i);
        (a.0 + weight(i) * x, a.1 + weight(i) * y)
    });
    let (cx, cy) = (mx / total, my / total);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &i in &pixels {
        let (x, y) = at(i);
        let (dx, dy, wt) = (x - cx, y - cy, weight(i));
        sxx += wt * dx * dx;
        syy += wt * dy * dy;
        sxy += wt * dx * dy;
    }
    let axis = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut pose = RobotState::new(cx, cy, axis - FRAC_PI_2);
    let (hx, hy) = pose.heading();
    let lean: f64 = pixels
        .iter()
        .map(|&i| {
            let (x, y) = at(i);
            (th[i] - geom.body_height).max(0.0) * ((x - cx) * hx + (y - cy) * hy)
        })
        .sum();
    if lean < 0.0 {
        pose.phi = wrap_angle(pose.phi + std::f64::consts::PI);
    }
    Ok((pose, PixelSet::new(w, h, body)?))
}

/// Obstacles standing above the bed outside `robot_pixels` (grown by one
/// pixel to drop the body's anti-aliased rim). Touching discs are split on
/// their distance transform. Ids follow detection order.
pub fn extract_obstacles(img: &DepthImage, robot_pixels: &PixelSet) -> Vec<Obstacle> {
    let (w, h, cell) = (img.width(), img.height(), img.cell());
    let th = top_hat(&img.heights_cm(), w, h, OBSTACLE_WINDOW);
    let excluded = if robot_pixels.is_empty() {
        vec![false; w * h]
    } else {
        robot_pixels.dilate(1).to_mask()
    };
    let mask: Vec<bool> = th
        .iter()
        .zip(&excluded)
        .map(|(t, x)| *t > OBSTACLE_THRESHOLD && !x)
        .collect();
    // the binary distance map plateaus along a narrow neck; the smoothed
    // rise breaks those ties toward each disc's centre
    let smooth = box_mean(&th, w, h);
    let peak = smooth.iter().cloned().fold(0.0, f64::max).max(1e-9);
    let dist: Vec<f64> = distance_inside(&mask, w, h)
        .iter()
        .zip(&smooth)
        .map(|(d, s)| d + s / peak)
        .collect();
    let min_sep = 1.5 * DEFAULT_OBSTACLE_RADIUS / cell;
    let mut regions = Vec::new();
    for comp in components(&mask, w, h) {
        if comp.len() >= MIN_OBSTACLE_PIXELS {
            regions.extend(split_touching(&comp, &dist, w, h, min_sep));
        }
    }
    let blocked: Vec<bool> = mask.iter().zip(&excluded).map(|(m, x)| *m || *x).collect();
    let mut out = Vec::with_capacity(regions.len());
    for region in regions {
        let mut support = region.clone();
        support.extend(ring(&region, w, h, &blocked));
        let mass: f64 = support.iter().map(|&i| th[i]).sum();
        if mass <= 0.0 {
            continue;
        }
        let (sx, sy) = support.iter().fold((0.0, 0.0), |a, &i| {
            (
                a.0 + th[i] * ((i % w) as f64 + 0.5),
                a.1 + th[i] * ((i / w) as f64 + 0.5),
            )
        });
        let height = region.iter().map(|&i| th[i]).fold(0.0, f64::max);
        let radius = (mass * cell * cell / (std::f64::consts::PI * height)).sqrt();
        out.push(Obstacle {
            id: out.len() as u32,
            x: sx / mass * cell,
            y: sy / mass * cell,
            radius,
            height,
        });
    }
    out
}

/// Detections matched to a previous frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracked {
    /// One entry per previous obstacle, in the same order and with the same
    /// id, size and (if unmatched) last known position.
    pub obstacles: Vec<Obstacle>,
    /// Ids of previous obstacles with no detection inside the gate.
    pub lost: Vec<u32>,
    /// Detections not matched to any previous obstacle.
    pub unmatched: Vec<Obstacle>,
}

/// Matches detections to `previous` by nearest centroid within `gate` cm,
/// closest pairs first.
pub fn track_obstacles(previous: &[Obstacle], detected: &[Obstacle], gate: f64) -> Tracked {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in previous.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            let dist = (p.x - d.x).hypot(p.y - d.y);
            if dist <= gate {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut prev_taken = vec![false; previous.len()];
    let mut det_taken = vec![false; detected.len()];
    let mut obstacles = previous.to_vec();
    for (_, i, j) in pairs {
        if prev_taken[i] || det_taken[j] {
            continue;
        }
        prev_taken[i] = true;
        det_taken[j] = true;
        obstacles[i].x = detected[j].x;
        obstacles[i].y = detected[j].y;
    }
    Tracked {
        obstacles,
        lost: previous
            .iter()
            .zip(&prev_taken)
            .filter(|p| !p.1)
            .map(|p| p.0.id)
            .collect(),
        unmatched: detected.iter().zip(&det_taken).filter(|p| !p.1).map(|p| *p.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::render_depth;
    use crate::terrain::Heightfield;
    use std::f64::consts::PI;

    fn bed() -> Heightfield {
        Heightfield::uniform(64, 64, 0.9375, 0.35, 1.5).unwrap()
    }

    fn ang_err(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn upright_pose_recovered_tightly() {
        let geom = RobotGeometry::default();
        for (x, y) in [(30.0, 30.0), (24.3, 35.7), (31.1, 22.45)] {
            let truth = RobotState::new(x, y, 0.0);
            let img = render_depth(&bed(), Some(&truth), &[], &geom);
            let (got, px) = extract_robot(&img, &geom).unwrap();
            assert!((got.x - x).hypot(got.y - y) < 0.5 * 0.9375, "{got:?}");
            assert!(ang_err(got.phi, 0.0) < 2f64.to_radians(), "{got:?}");
            assert!(px.len() > 150);
        }
    }

    #[test]
    fn pose_grid_round_trip() {
        let geom = RobotGeometry::default();
        let mut worst = (0.0f64, 0.0f64);
        for xi in 0..5 {
            for yi in 0..5 {
                for k in 0..8 {
                    let truth = RobotState::new(
                        18.0 + 6.0 * xi as f64 + 0.13,
                        18.0 + 6.0 * yi as f64 + 0.29,
                        -PI + k as f64 * PI / 4.0 + 0.05,
                    );
                    let img = render_depth(&bed(), Some(&truth), &[], &geom);
                    let (got, _) = extract_robot(&img, &geom).unwrap();
                    worst.0 = worst.0.max((got.x - truth.x).hypot(got.y - truth.y));
                    worst.1 = worst.1.max(ang_err(got.phi, truth.phi));
                }
            }
        }
        assert!(worst.0 < 1.0 && worst.1 < 2f64.to_radians(), "{worst:?}");
    }

    #[test]
    fn empty_image_has_no_robot() {
        let img = render_depth(&bed(), None, &[], &RobotGeometry::default());
        assert!(matches!(
            extract_robot(&img, &RobotGeometry::default()),
            Err(EncodingError::NoRobot)
        ));
    }

    #[test]
    fn three_obstacles_recovered() {
        let geom = RobotGeometry::default();
        let truth = [
            Obstacle::standard(0, 10.2, 12.7),
            Obstacle::standard(1, 40.9, 15.1),
            Obstacle::standard(2, 50.33, 48.0),
        ];
        let robot = RobotState::new(27.0, 36.0, 0.3);
        let img = render_depth(&bed(), Some(&robot), &truth, &geom);
        let (_, px) = extract_robot(&img, &geom).unwrap();
        let got = extract_obstacles(&img, &px);
        assert_eq!(got.len(), 3);
        let tracked = track_obstacles(&truth, &got, TRACK_GATE);
        assert!(tracked.lost.is_empty());
        for (t, g) in truth.iter().zip(&tracked.obstacles) {
            assert!((t.x - g.x).hypot(t.y - g.y) < 0.5, "{t:?} {g:?}");
        }
        for g in &got {
            assert!((g.radius - 2.0).abs() < 0.1 && (g.height - 2.0).abs() < 0.05, "{g:?}");
        }
    }

    #[test]
    fn touching_obstacles_split() {
        let geom = RobotGeometry::default();
        for (x, y) in [(22.5, 20.0), (31.3, 27.9)] {
            let truth = [Obstacle::standard(0, x, y), Obstacle::standard(1, x, y + 4.0)];
            let img = render_depth(&bed(), None, &truth, &geom);
            let got = extract_obstacles(&img, &PixelSet::empty(64, 64));
            assert_eq!(got.len(), 2, "{got:?}");
            let tracked = track_obstacles(&truth, &got, TRACK_GATE);
            for (t, g) in truth.iter().zip(&tracked.obstacles) {
                assert!((t.x - g.x).hypot(t.y - g.y) < 1.5, "{t:?} {g:?}");
            }
        }
        let side = [Obstacle::standard(0, 20.0, 20.0), Obstacle::standard(1, 24.0, 20.0)];
        let img = render_depth(&bed(), None, &side, &geom);
        assert_eq!(extract_obstacles(&img, &PixelSet::empty(64, 64)).len(), 2);
    }

    #[test]
    fn empty_scene_has_no_obstacles() {
        let img = render_depth(&bed(), None, &[], &RobotGeometry::default());
        assert!(extract_obstacles(&img, &PixelSet::empty(64, 64)).is_empty());
    }

    #[test]
    fn tracking_gate_and_order() {
        let prev = [Obstacle::standard(4, 10.0, 10.0), Obstacle::standard(9, 30.0, 10.0)];
        let det = [Obstacle::standard(0, 30.5, 9.0), Obstacle::standard(1, 50.0, 50.0)];
        let t = track_obstacles(&prev, &det, TRACK_GATE);
        assert_eq!(t.lost, vec![4]);
        assert_eq!(t.obstacles[1].id, 9);
        assert_eq!((t.obstacles[1].x, t.obstacles[1].y), (30.5, 9.0));
        assert_eq!(t.obstacles[0], prev[0]);
        assert_eq!(t.unmatched.len(), 1);
    }

    #[test]
    fn dug_bed_gives_no_phantoms() {
        use crate::sim::{sim_step, Embodiment, SimParams};
        use crate::terrain::Action;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let geom = RobotGeometry::default();
        let params = SimParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hf = Heightfield::uniform(64, 64, 0.9375, 20f64.to_radians(), 1.5).unwrap();
        let mut robot = RobotState::new(30.0, 24.0, 0.2);
        let mut obs = vec![Obstacle::standard(0, 14.0, 30.0), Obstacle::standard(1, 44.0, 12.0)];
        for a in [
            Action::Af,
            Action::Lp,
            Action::Af,
            Action::Rp,
            Action::Fp,
            Action::Af,
            Action::Lfe,
        ] {
            let r = sim_step(&hf, &robot, &obs, a, &geom, &params, Some(&mut rng), Embodiment::Robot);
            hf = r.next_heightfield;
            robot = r.next_robot;
            obs = r.next_obstacles;
            let img = render_depth(&hf, Some(&robot), &obs, &geom);
            let (pose, px) = extract_robot(&img, &geom).unwrap();
            assert!((pose.x - robot.x).hypot(pose.y - robot.y) < 1.0, "{pose:?} {robot:?}");
            assert!(ang_err(pose.phi, robot.phi) < 2f64.to_radians());
            let got = extract_obstacles(&img, &px);
            assert_eq!(got.len(), 2, "after {a}: {got:?}");
            let t = track_obstacles(&obs, &got, TRACK_GATE);
            for (o, g) in obs.iter().zip(&t.obstacles) {
                assert!((o.x - g.x).hypot(o.y - g.y) < 0.5, "{o:?} {g:?}");
            }
        }
    }
}
