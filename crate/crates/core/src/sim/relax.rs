//! Angle-of-repose avalanche relaxation.
//!
//! A cell is unstable when its steepest effective drop to a 4-neighbour
//! exceeds `repose_tan`. The effective drop adds the tank tilt for the
//! downhill neighbour and subtracts it for the uphill one, so stored heights
//! stay relative to the inclined plane. Each unstable cell hands
//! `relax_fraction` of its excess to the steepest neighbour; `0.5` levels the
//! pair exactly at the threshold.

use std::collections::BinaryHeap;

use crate::terrain::Heightfield;

use super::SimParams;

/// Slack on the stability test, in slope units.
pub const SLOPE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxOutcome {
    pub heightfield: Heightfield,
    /// Volume (cm³) each cell shed to its downhill neighbour.
    pub flux: Vec<f64>,
    pub passes: usize,
    pub converged: bool,
}

/// Relaxes `hf` until every cell is stable or `max_relax_passes` is reached.
pub fn relax(hf: &Heightfield, params: &SimParams) -> RelaxOutcome {
    let mut out = hf.clone();
    let (flux, passes, converged) = relax_in_place(&mut out, params);
    RelaxOutcome {
        heightfield: out,
        flux,
        passes,
        converged,
    }
}

pub(crate) fn relax_in_place(hf: &mut Heightfield, params: &SimParams) -> (Vec<f64>, usize, bool) {
    let w = hf.width_cells();
    let h = hf.height_cells();
    let cs = hf.cell_size();
    let area = cs * cs;
    let tilt = hf.slope_angle().tan();
    let thr = params.repose_tan;
    let k = params.relax_fraction;
    let n = w * h;
    let heights = hf.heights_mut();

    let mut flux = vec![0.0; n];
    let mut in_pass = vec![0usize; n];
    let mut in_next = vec![0usize; n];
    let mut list: Vec<usize> = (0..n).collect();
    let mut next: Vec<usize> = Vec::new();
    let mut passes = 0;

    // Passes alternate between visiting active cells from uphill to downhill
    // and back. A cell that becomes active further along the current sweep
    // joins the current pass, so a runout or a retreating scarp can cross
    // the whole field in one pass.
    while !list.is_empty() {
        if passes == params.max_relax_passes {
            return (flux, passes, false);
        }
        passes += 1;
        let tag = passes;
        let downward = passes % 2 == 1;
        let key = |i: usize| if downward { i } else { n - 1 - i };
        let mut heap: BinaryHeap<usize> = BinaryHeap::with_capacity(list.len());
        for &i in &list {
            in_pass[i] = tag;
            heap.push(key(i));
        }
        while let Some(ki) = heap.pop() {
            let i = key(ki);
            let col = i % w;
            let row = i / w;
            let hi = heights[i];
            // neighbour order fixes tie-breaking: down, left, right, up
            let mut best = f64::NEG_INFINITY;
            let mut target = usize::MAX;
            let mut consider = |j: usize, tilt_term: f64| {
                let s = (hi - heights[j]) / cs + tilt_term;
                if s > best {
                    best = s;
                    target = j;
                }
            };
            if row > 0 {
                consider(i - w, tilt);
            }
            if col > 0 {
                consider(i - 1, 0.0);
            }
            if col + 1 < w {
                consider(i + 1, 0.0);
            }
            if row + 1 < h {
                consider(i + w, -tilt);
            }
            if target == usize::MAX || best <= thr + SLOPE_TOLERANCE {
                continue;
            }
            let q = (k * (best - thr) * cs).min(hi);
            if q <= 0.0 {
                continue;
            }
            heights[i] = hi - q;
            heights[target] += q;
            if row > 0 && target == i - w {
                flux[i] += q * area;
            }
            for c in [i, target] {
                let cc = c % w;
                let cr = c / w;
                let mut mark = |j: usize| {
                    if key(j) < ki {
                        if in_pass[j] != tag {
                            in_pass[j] = tag;
                            heap.push(key(j));
                        }
                    } else if in_next[j] != tag {
                        in_next[j] = tag;
                        next.push(j);
                    }
                };
                mark(c);
                if cr > 0 {
                    mark(c - w);
                }
                if cc > 0 {
                    mark(c - 1);
                }
                if cc + 1 < w {
                    mark(c + 1);
                }
                if cr + 1 < h {
                    mark(c + w);
                }
            }
        }
        std::mem::swap(&mut list, &mut next);
        next.clear();
    }
    (flux, passes, true)
}

/// Steepest effective drop from `(col, row)` to any neighbour, in slope units.
pub fn effective_slope(hf: &Heightfield, col: usize, row: usize) -> f64 {
    let tilt = hf.slope_angle().tan();
    let cs = hf.cell_size();
    let h = hf.get(col, row);
    let mut best = f64::NEG_INFINITY;
    if row > 0 {
        best = best.max((h - hf.get(col, row - 1)) / cs + tilt);
    }
    if col > 0 {
        best = best.max((h - hf.get(col - 1, row)) / cs);
    }
    if col + 1 < hf.width_cells() {
        best = best.max((h - hf.get(col + 1, row)) / cs);
    }
    if row + 1 < hf.height_cells() {
        best = best.max((h - hf.get(col, row + 1)) / cs - tilt);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::local_slope;

    #[test]
    fn flat_field_is_stable() {
        let hf = Heightfield::uniform(16, 16, 0.9375, 0.0, 2.0).unwrap();
        let out = relax(&hf, &SimParams::default());
        assert!(out.converged);
        assert_eq!(out.heightfield, hf);
        assert!(out.flux.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn spike_relaxes_below_repose() {
        let cs = 0.9375;
        let mut hf = Heightfield::uniform(24, 24, cs, 0.0, 0.0).unwrap();
        let i = hf.index(12, 12);
        hf.heights_mut()[i] = 10.0 * cs;
        let params = SimParams {
            max_relax_passes: 20_000,
            ..SimParams::default()
        };
        let v0 = hf.volume();
        let out = relax(&hf, &params);
        assert!(out.converged, "passes {}", out.passes);
        let max_slope = (0..24)
            .flat_map(|r| (0..24).map(move |c| (c, r)))
            .map(|(c, r)| local_slope(&out.heightfield, c, r).unwrap())
            .fold(0.0, f64::max);
        assert!(
            max_slope <= params.repose_tan + SLOPE_TOLERANCE + 1e-9,
            "max slope {max_slope}"
        );
        assert!((out.heightfield.volume() - v0).abs() / v0 < 1e-9);
    }

    #[test]
    fn inclined_uniform_field_below_repose_is_untouched() {
        let hf = Heightfield::uniform(32, 32, 0.9375, 20f64.to_radians(), 1.5).unwrap();
        let out = relax(&hf, &SimParams::default());
        assert_eq!(out.heightfield, hf);
        assert_eq!(out.passes, 1);
    }

    #[test]
    fn steep_tank_slides_everything_down() {
        let hf = Heightfield::uniform(8, 8, 1.0, 30f64.to_radians(), 1.0).unwrap();
        let params = SimParams {
            max_relax_passes: 100_000,
            ..SimParams::default()
        };
        let out = relax(&hf, &params);
        assert!(out.converged);
        assert!((out.heightfield.volume() - hf.volume()).abs() < 1e-9);
        // top row drained into lower rows
        assert!(out.heightfield.get(3, 7) < out.heightfield.get(3, 0));
        assert!(out.flux.iter().sum::<f64>() > 0.0);
    }
}
