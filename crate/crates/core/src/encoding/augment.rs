use rand::Rng;

use crate::raster::disc;
use crate::terrain::{Obstacle, RobotGeometry, DEFAULT_OBSTACLE_HEIGHT, DEFAULT_OBSTACLE_RADIUS};

use super::{denormalize, extract_obstacles, extract_robot, normalize, DepthImage, PixelSet};

/// Smallest gap, cm, between a pasted disc and any robot pixel centre.
pub const EXCLUSION_CM: f64 = 6.0;
const ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub image: DepthImage,
    pub pasted: Vec<Obstacle>,
    /// Set when some disc found no valid spot; the image is then unchanged.
    pub skipped: bool,
}

/// Pastes one to three standard obstacle discs at random spots whose rim
/// stays at least [`EXCLUSION_CM`] from the robot and clear of other obstacles.
pub fn paste_obstacle_augment<R: Rng + ?Sized>(img: &DepthImage, geom: &RobotGeometry, rng: &mut R) -> AugmentOutcome {
    let (w, h, cell) = (img.width(), img.height(), img.cell());
    let robot = extract_robot(img, geom)
        .map(|r| r.1)
        .unwrap_or_else(|_| PixelSet::empty(w, h));
    let robot_pts: Vec<(f64, f64)> = robot
        .coords()
        .map(|(r, c)| ((c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell))
        .collect();
    let mut taken: Vec<(f64, f64, f64)> = extract_obstacles(img, &robot)
        .iter()
        .map(|o| (o.x, o.y, o.radius))
        .collect();
    let radius = DEFAULT_OBSTACLE_RADIUS;
    let (fw, fh) = (w as f64 * cell, h as f64 * cell);
    let count = rng.gen_range(1..=3usize);
    let mut pasted = Vec::with_capacity(count);
    for k in 0..count {
        let spot = (0..ATTEMPTS).find_map(|_| {
            let x = rng.gen_range(radius..fw - radius);
            let y = rng.gen_range(radius..fh - radius);
            let clear_robot = robot_pts
                .iter()
                .all(|p| (p.0 - x).hypot(p.1 - y) >= EXCLUSION_CM + radius);
            let clear_obstacles = taken.iter().all(|o| (o.0 - x).hypot(o.1 - y) >= o.2 + radius + 1.0);
            (clear_robot && clear_obstacles).then_some((x, y))
        });
        let Some((x, y)) = spot else {
            return AugmentOutcome {
                image: img.clone(),
                pasted: Vec::new(),
                skipped: true,
            };
        };
        taken.push((x, y, radius));
        pasted.push(Obstacle {
            id: 1000 + k as u32,
            x,
            y,
            radius,
            height: DEFAULT_OBSTACLE_HEIGHT,
        });
    }
    let mut values = img.values().to_vec();
    for o in &pasted {
        for c in disc(&img.frame(), o.x, o.y, o.radius) {
            values[c.idx] = normalize(denormalize(values[c.idx]) + c.weight * o.height);
        }
    }
    AugmentOutcome {
        image: DepthImage::from_clamped(img.frame(), values),
        pasted,
        skipped: false,
    }
}
