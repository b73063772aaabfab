//! Leg sweep footprints and the material transport of one excavation.

use crate::raster::{oriented_rect, Frame};
use crate::terrain::{Action, Heightfield, Leg, RobotGeometry, RobotState};

use super::{SimEvent, SimParams};

/// One rasterized cell swept by a leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintCell {
    pub leg: Leg,
    pub idx: usize,
    /// Covered fraction of the cell.
    pub weight: f64,
    /// Normalized position along the sweep: 0 at the front end, 1 at the back.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Footprint {
    pub cells: Vec<FootprintCell>,
    pub events: Vec<SimEvent>,
}

impl Footprint {
    /// Covered area in cells.
    pub fn area_cells(&self) -> f64 {
        self.cells.iter().map(|c| c.weight).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Total weight per cell index, merging overlapping legs, sorted by index.
    pub fn merged(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self.cells.iter().map(|c| (c.idx, c.weight)).collect();
        v.sort_by_key(|c| c.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
        for (i, w) in v {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => out.push((i, w)),
            }
        }
        out
    }
}

/// Cells swept by every leg active under `action`. Each leg sweeps a
/// `sweep_length x leg_width` strip centred on its hub and aligned with the heading.
pub fn leg_footprint(frame: &Frame, robot: &RobotState, geom: &RobotGeometry, action: Action) -> Footprint {
    let mut cells = Vec::new();
    for &leg in action.legs() {
        let (u, v) = geom.leg_hub(leg);
        for c in oriented_rect(frame, robot, u, v, geom.leg_width / 2.0, geom.sweep_length / 2.0) {
            cells.push(FootprintCell {
                leg,
                idx: c.idx,
                weight: c.weight,
                phase: ((1.0 - c.along) / 2.0).clamp(0.0, 1.0),
            });
        }
    }
    let mut events = Vec::new();
    if cells.is_empty() {
        events.push(SimEvent::FootprintOutOfBounds);
    }
    Footprint { cells, events }
}

/// Removes up to `dig_depth * weight` from each swept cell. Every connected
/// group of swept cells (one per leg) spreads its removed volume over the
/// cells `deposit_offset` rows downhill of it that it does not itself cover.
/// Volume is conserved. Returns the new field and the moved volume in cm³.
pub fn excavate(hf: &Heightfield, cells: &[(usize, f64)], params: &SimParams) -> (Heightfield, f64) {
    let mut out = hf.clone();
    let moved = excavate_in_place(&mut out, cells, params);
    (out, moved)
}

/// Splits weighted cells into 8-connected groups, preserving index order within each.
pub(crate) fn connected_groups(width: usize, cells: &[(usize, f64)]) -> Vec<Vec<(usize, f64)>> {
    let mut sorted = cells.to_vec();
    sorted.sort_by_key(|c| c.0);
    let find = |i: usize| sorted.binary_search_by_key(&i, |c| c.0).ok();
    let mut group = vec![usize::MAX; sorted.len()];
    let mut groups = Vec::new();
    for start in 0..sorted.len() {
        if group[start] != usize::MAX {
            continue;
        }
        let g = groups.len();
        let mut members = vec![start];
        group[start] = g;
        let mut k = 0;
        while k < members.len() {
            let idx = sorted[members[k]].0;
            let (col, row) = ((idx % width) as i64, (idx / width) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (c, r) = (col + dc, row + dr);
                    if c < 0 || r < 0 || c >= width as i64 {
                        continue;
                    }
                    if let Some(m) = find(r as usize * width + c as usize) {
                        if group[m] == usize::MAX {
                            group[m] = g;
                            members.push(m);
                        }
                    }
                }
            }
            k += 1;
        }
        members.sort_unstable();
        groups.push(members.into_iter().map(|m| sorted[m]).collect());
    }
    groups
}

pub(crate) fn excavate_in_place(hf: &mut Heightfield, cells: &[(usize, f64)], params: &SimParams) -> f64 {
    let w = hf.width_cells();
    let area = hf.cell_size() * hf.cell_size();
    let groups = connected_groups(w, cells);
    let heights = hf.heights_mut();
    // all legs dig before any sand lands, so deposits never get re-dug
    let mut removed = vec![0.0; groups.len()];
    for (g, group) in groups.iter().enumerate() {
        for &(i, wt) in group {
            let take = (params.dig_depth * wt).min(heights[i]).max(0.0);
            heights[i] -= take;
            removed[g] += take;
        }
    }
    for (group, &removed) in groups.iter().zip(&removed) {
        if removed <= 0.0 {
            continue;
        }
        let target = deposit_cells(w, group, params.deposit_offset);
        let total: f64 = target.iter().map(|c| c.1).sum();
        for (i, wt) in target {
            heights[i] += removed * wt / total;
        }
    }
    removed.iter().sum::<f64>() * area
}

/// Cells the strip's sand lands on: the strip shifted `offset` rows downhill,
/// minus the strip itself. Rows below the field fold onto row 0. Falls back
/// to the shifted strip when the two coincide.
fn deposit_cells(w: usize, group: &[(usize, f64)], offset: usize) -> Vec<(usize, f64)> {
    let shifted = |off: usize| {
        let mut v: Vec<(usize, f64)> = group
            .iter()
            .map(|&(i, wt)| ((i / w).saturating_sub(off) * w + i % w, wt))
            .collect();
        v.sort_by_key(|c| c.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(v.len());
        for (i, wt) in v {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += wt,
                _ => merged.push((i, wt)),
            }
        }
        merged
    };
    let own = |i: usize| group.binary_search_by_key(&i, |c| c.0).map_or(0.0, |k| group[k].1);
    let out: Vec<(usize, f64)> = shifted(offset)
        .into_iter()
        .filter_map(|(i, wt)| {
            let rest = wt - own(i);
            (rest > 1e-12).then_some((i, rest))
        })
        .collect();
    if out.is_empty() {
        shifted(offset)
    } else {
        out
    }
}
