//! Area-weighted rasterization of discs and oriented rectangles.
//!
//! Coverage is estimated by sampling each cell on a Fibonacci lattice of
//! `SAMPLES` points, which stays accurate for edges at any orientation.

use crate::terrain::{Heightfield, RobotState};

pub const SAMPLES: usize = 89;
const FIB_STEP: usize = 55;

/// Regular grid placement shared by heightfields and images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Cell (pixel) edge length in cm.
    pub cell: f64,
}

impl Frame {
    pub fn of(hf: &Heightfield) -> Self {
        Self {
            width: hf.width_cells(),
            height: hf.height_cells(),
            cell: hf.cell_size(),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, idx: usize) -> (f64, f64) {
        let col = idx % self.width;
        let row = idx / self.width;
        ((col as f64 + 0.5) * self.cell, (row as f64 + 0.5) * self.cell)
    }

    /// Cell range `[lo, hi)` overlapping the world interval `[a, b]` along one axis.
    fn span(&self, a: f64, b: f64, n: usize) -> (usize, usize) {
        let lo = (a / self.cell).floor().max(0.0);
        let hi = ((b / self.cell).floor() + 1.0).min(n as f64);
        if hi <= lo {
            (0, 0)
        } else {
            (lo as usize, hi as usize)
        }
    }
}

/// A rasterized cell with its covered fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covered {
    pub idx: usize,
    pub weight: f64,
}

fn sample_offsets() -> [(f64, f64); SAMPLES] {
    let mut o = [(0.0, 0.0); SAMPLES];
    for (k, v) in o.iter_mut().enumerate() {
        *v = (
            (k as f64 + 0.5) / SAMPLES as f64,
            (((k * FIB_STEP) % SAMPLES) as f64 + 0.5) / SAMPLES as f64,
        );
    }
    o
}

/// Cells covered by the disc of radius `r` centred at `(cx, cy)`.
pub fn disc(frame: &Frame, cx: f64, cy: f64, r: f64) -> Vec<Covered> {
    let (c0, c1) = frame.span(cx - r, cx + r, frame.width);
    let (r0, r1) = frame.span(cy - r, cy + r, frame.height);
    let offs = sample_offsets();
    let r2 = r * r;
    let total = SAMPLES as f64;
    let mut out = Vec::new();
    for row in r0..r1 {
        for col in c0..c1 {
            let mut hits = 0usize;
            for (ox, oy) in offs {
                let dx = (col as f64 + ox) * frame.cell - cx;
                let dy = (row as f64 + oy) * frame.cell - cy;
                if dx * dx + dy * dy <= r2 {
                    hits += 1;
                }
            }
            if hits > 0 {
                out.push(Covered {
                    idx: row * frame.width + col,
                    weight: hits as f64 / total,
                });
            }
        }
    }
    out
}

/// A cell covered by an oriented rectangle, with the mean body-frame
/// longitudinal coordinate of the covered samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectCovered {
    pub idx: usize,
    pub weight: f64,
    /// Mean of `(v - v_center) / half_v` over covered samples, in `[-1, 1]`.
    pub along: f64,
}

/// Cells covered by the rectangle centred at body-frame `(u0, v0)` of `pose`,
/// spanning `±half_u` laterally and `±half_v` along the heading.
pub fn oriented_rect(frame: &Frame, pose: &RobotState, u0: f64, v0: f64, half_u: f64, half_v: f64) -> Vec<RectCovered> {
    let (cx, cy) = pose.body_to_world(u0, v0);
    let reach = half_u.hypot(half_v);
    let (c0, c1) = frame.span(cx - reach, cx + reach, frame.width);
    let (r0, r1) = frame.span(cy - reach, cy + reach, frame.height);
    let offs = sample_offsets();
    let (s, c) = pose.phi.sin_cos();
    let total = SAMPLES as f64;
    let mut out = Vec::new();
    for row in r0..r1 {
        for col in c0..c1 {
            let mut hits = 0usize;
            let mut along = 0.0;
            for (ox, oy) in offs {
                let dx = (col as f64 + ox) * frame.cell - cx;
                let dy = (row as f64 + oy) * frame.cell - cy;
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                if u.abs() <= half_u && v.abs() <= half_v {
                    hits += 1;
                    along += v / half_v;
                }
            }
            if hits > 0 {
                out.push(RectCovered {
                    idx: row * frame.width + col,
                    weight: hits as f64 / total,
                    along: along / hits as f64,
                });
            }
        }
    }
    out
}

/// Cells whose centre lies inside the oriented rectangle (binary rasterization).
pub fn oriented_rect_centers(
    frame: &Frame,
    pose: &RobotState,
    u0: f64,
    v0: f64,
    half_u: f64,
    half_v: f64,
) -> Vec<usize> {
    let (cx, cy) = pose.body_to_world(u0, v0);
    let reach = half_u.hypot(half_v);
    let (c0, c1) = frame.span(cx - reach, cx + reach, frame.width);
    let (r0, r1) = frame.span(cy - reach, cy + reach, frame.height);
    let (s, c) = pose.phi.sin_cos();
    let mut out = Vec::new();
    for row in r0..r1 {
        for col in c0..c1 {
            let dx = (col as f64 + 0.5) * frame.cell - cx;
            let dy = (row as f64 + 0.5) * frame.cell - cy;
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            if u.abs() <= half_u && v.abs() <= half_v {
                out.push(row * frame.width + col);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FRAME: Frame = Frame {
        width: 64,
        height: 64,
        cell: 0.9375,
    };

    #[test]
    fn disc_area_matches() {
        let cells = disc(&FRAME, 30.1, 22.7, 2.0);
        let area: f64 = cells.iter().map(|c| c.weight).sum::<f64>() * FRAME.cell * FRAME.cell;
        assert!((area - PI * 4.0).abs() / (PI * 4.0) < 0.02, "area {area}");
    }

    #[test]
    fn disc_clipped_at_edge() {
        let cells = disc(&FRAME, 0.0, 0.0, 2.0);
        let area: f64 = cells.iter().map(|c| c.weight).sum::<f64>() * FRAME.cell * FRAME.cell;
        assert!((area - PI).abs() / PI < 0.05);
    }

    #[test]
    fn rect_area_rotation_invariant() {
        for deg in [0.0, 17.0, 45.0, 90.0, 133.0] {
            let pose = RobotState::new(31.0, 29.3, f64::to_radians(deg));
            let cells = oriented_rect(&FRAME, &pose, -7.5, 7.5, 0.75, 6.0);
            let area: f64 = cells.iter().map(|c| c.weight).sum::<f64>() * FRAME.cell * FRAME.cell;
            assert!((area - 18.0).abs() / 18.0 < 0.03, "deg {deg} area {area}");
        }
    }
}
