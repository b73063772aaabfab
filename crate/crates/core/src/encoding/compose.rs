use crate::terrain::RobotGeometry;

use super::morph::dilate_mask;
use super::{extract_robot, DeltaImage, DepthImage, EncodingError, PixelSet, Result};

/// Fills `hole` from the outside in: each round, every hole pixel with at
/// least one known 8-neighbour takes their mean, and becomes known for the
/// next round. `known` marks pixels that may be read. Pixels cut off from
/// every known pixel take the mean of all known pixels.
pub fn fill_holes(values: &mut [f64], w: usize, h: usize, hole: &PixelSet, known: &[bool]) {
    let mut known = known.to_vec();
    let mut pending: Vec<usize> = hole.indices().iter().copied().filter(|&i| !known[i]).collect();
    while !pending.is_empty() {
        let mut updates = Vec::new();
        for &i in &pending {
            let (row, col) = ((i / w) as i64, (i % w) as i64);
            let (mut sum, mut n) = (0.0, 0usize);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, c) = (row + dr, col + dc);
                    if (dr, dc) == (0, 0) || r < 0 || c < 0 || r as usize >= h || c as usize >= w {
                        continue;
                    }
                    let j = r as usize * w + c as usize;
                    if known[j] {
                        sum += values[j];
                        n += 1;
                    }
                }
            }
            if n > 0 {
                updates.push((i, sum / n as f64));
            }
        }
        if updates.is_empty() {
            let (sum, n) = values
                .iter()
                .zip(&known)
                .filter(|p| *p.1)
                .fold((0.0, 0usize), |a, p| (a.0 + p.0, a.1 + 1));
            let fallback = if n > 0 { sum / n as f64 } else { 0.0 };
            for &i in &pending {
                values[i] = fallback;
            }
            break;
        }
        for &(i, v) in &updates {
            values[i] = v;
            known[i] = true;
        }
        pending.retain(|&i| !known[i]);
    }
}

/// Next-frame image from the two predicted deltas. Outside the old and new
/// robot pixel sets the environment prediction is used as is; the new body
/// comes from the robot prediction; ground the robot uncovered is filled
/// from its surroundings.
pub fn compose_next(
    img_t: &DepthImage,
    env_delta: &DeltaImage,
    robot_delta: &DeltaImage,
    geom: &RobotGeometry,
) -> Result<DepthImage> {
    for d in [env_delta, robot_delta] {
        if (d.width(), d.height()) != (img_t.width(), img_t.height()) {
            return Err(EncodingError::Shape("delta and image sizes differ".into()));
        }
    }
    let (_, p_t) = extract_robot(img_t, geom)?;
    let robot_img = robot_delta.apply(img_t)?;
    let (_, p_next) = extract_robot(&robot_img, geom)?;
    compose_extracted(img_t, env_delta, &robot_img, &p_t, &p_next)
}

/// [`compose_next`] for callers that already hold the robot-predicted image
/// `clamp(img_t + robot_delta)` and both extracted robot pixel sets.
pub fn compose_extracted(
    img_t: &DepthImage,
    env_delta: &DeltaImage,
    robot_img: &DepthImage,
    p_t: &PixelSet,
    p_next: &PixelSet,
) -> Result<DepthImage> {
    let (w, h) = (img_t.width(), img_t.height());
    if (env_delta.width(), env_delta.height()) != (w, h) || (robot_img.width(), robot_img.height()) != (w, h) {
        return Err(EncodingError::Shape("delta and image sizes differ".into()));
    }
    let mut out = env_delta.apply(img_t)?.values().to_vec();
    for &i in p_next.indices() {
        out[i] = robot_img.values()[i];
    }
    let occupied = p_t.union(p_next);
    let known: Vec<bool> = occupied.to_mask().iter().map(|o| !o).collect();
    fill_holes(&mut out, w, h, &p_t.difference(p_next), &known);
    Ok(DepthImage::from_clamped(img_t.frame(), out))
}

/// Pixels within one pixel of the boundary of `set`, inside or outside.
pub fn boundary_band(set: &PixelSet) -> Vec<bool> {
    let (w, h) = (set.width, set.height);
    let inner = set.to_mask();
    let outer = dilate_mask(&inner, w, h);
    let not_inner: Vec<bool> = inner.iter().map(|b| !b).collect();
    let eroded_complement = dilate_mask(&not_inner, w, h);
    (0..w * h).map(|i| outer[i] && eroded_complement[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{render_depth, DeltaImage};
    use crate::raster::Frame;
    use crate::terrain::{Heightfield, Obstacle, RobotState};
    use proptest::prelude::*;

    fn bed() -> Heightfield {
        let mut hf = Heightfield::uniform(64, 64, 0.9375, 0.35, 1.5).unwrap();
        for (i, h) in hf.heights_mut().iter_mut().enumerate() {
            *h += 0.2 * (((i * 7919) % 13) as f64 / 13.0);
        }
        hf
    }

    #[test]
    fn zero_deltas_are_identity() {
        let geom = RobotGeometry::default();
        let img = render_depth(
            &bed(),
            Some(&RobotState::new(30.0, 30.0, 0.7)),
            &[Obstacle::standard(0, 10.0, 10.0)],
            &geom,
        );
        let z = DeltaImage::zeros(img.frame());
        assert_eq!(compose_next(&img, &z, &z, &geom).unwrap(), img);
    }

    #[test]
    fn holes_fill_from_outside() {
        let (w, h) = (7, 7);
        let mut v = vec![1.0; 49];
        let hole = PixelSet::new(w, h, vec![16, 17, 18, 23, 24, 25, 30, 31, 32]).unwrap();
        for &i in hole.indices() {
            v[i] = 9.0;
        }
        let known: Vec<bool> = hole.to_mask().iter().map(|b| !b).collect();
        fill_holes(&mut v, w, h, &hole, &known);
        assert!(v.iter().all(|x| (*x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn missing_robot_is_an_error() {
        let geom = RobotGeometry::default();
        let img = render_depth(&bed(), None, &[], &geom);
        let z = DeltaImage::zeros(img.frame());
        assert!(compose_next(&img, &z, &z, &geom).is_err());
    }

    #[test]
    fn band_surrounds_boundary() {
        let set = PixelSet::new(5, 5, vec![12]).unwrap();
        let band = boundary_band(&set);
        assert_eq!(band.iter().filter(|b| **b).count(), 9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn locality_outside_robot(
            x in 20.0f64..40.0, y in 20.0f64..40.0, phi in -3.1f64..3.1,
            dx in -2.0f64..2.0, dy in -2.0f64..2.0, seed in 0u64..1000,
        ) {
            let geom = RobotGeometry::default();
            let hf = bed();
            let r0 = RobotState::new(x, y, phi);
            let r1 = RobotState::new(x + dx, y + dy, phi + 0.1);
            let img = render_depth(&hf, Some(&r0), &[], &geom);
            let moved = render_depth(&hf, Some(&r1), &[], &geom);
            let robot_delta = DeltaImage::between(&img, &moved).unwrap();
            let frame: Frame = img.frame();
            let env = DeltaImage::from_clamped(frame, (0..frame.len()).map(|i| 0.3 * (((i as u64 * 31 + seed) % 17) as f64 / 17.0 - 0.5)));
            let out = compose_next(&img, &env, &robot_delta, &geom).unwrap();
            let (_, p_t) = extract_robot(&img, &geom).unwrap();
            let (_, p_n) = extract_robot(&moved, &geom).unwrap();
            let base = env.apply(&img).unwrap();
            for i in 0..frame.len() {
                if !p_t.contains(i) && !p_n.contains(i) {
                    prop_assert_eq!(out.values()[i].to_bits(), base.values()[i].to_bits());
                }
                prop_assert!((-1.0..=1.0).contains(&out.values()[i]));
            }
        }
    }
}
