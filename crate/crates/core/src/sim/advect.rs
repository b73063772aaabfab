//! Obstacle transport by avalanche flux, including interference between
//! neighbouring obstacles.
//!
//! Obstacles are visited from uphill to downhill. Each one slides downhill by
//! `obstacle_mobility` times the mean flux under its footprint, then casts a
//! flux shadow down its columns: flux there is scaled by
//! `1 - flux_block * f * exp(-d / shadow_length)`, where `f` is the fraction
//! of the column the disc blocks and `d` the distance below the disc. A later
//! pass from downhill to uphill stops each obstacle at contact with a disc
//! already resting below it.

use crate::raster::{disc, Frame};
use crate::terrain::{Bounds, Obstacle};

use super::{SimEvent, SimParams};

#[derive(Debug, Clone, PartialEq)]
pub struct AdvectOutcome {
    pub obstacles: Vec<Obstacle>,
    pub events: Vec<SimEvent>,
}

/// Mean of `field` under the disc footprint, weighted by coverage.
pub fn footprint_mean(frame: &Frame, field: &[f64], x: f64, y: f64, r: f64) -> f64 {
    let cells = disc(frame, x, y, r);
    let w: f64 = cells.iter().map(|c| c.weight).sum();
    if w <= 0.0 {
        return 0.0;
    }
    cells.iter().map(|c| c.weight * field[c.idx]).sum::<f64>() / w
}

fn cast_shadow(frame: &Frame, flux: &mut [f64], o: &Obstacle, params: &SimParams) {
    if params.flux_block <= 0.0 {
        return;
    }
    let mut column_block = vec![0.0; frame.width];
    for c in disc(frame, o.x, o.y, o.radius) {
        column_block[c.idx % frame.width] += c.weight * frame.cell;
    }
    let bottom = o.y - o.radius;
    for (col, chord) in column_block.iter().enumerate() {
        if *chord <= 0.0 {
            continue;
        }
        let f = (chord / (2.0 * o.radius)).min(1.0);
        for row in 0..frame.height {
            let yc = (row as f64 + 0.5) * frame.cell;
            if yc >= o.y {
                break;
            }
            let d = (bottom - yc).max(0.0);
            let atten = 1.0 - params.flux_block * f * (-d / params.shadow_length).exp();
            flux[row * frame.width + col] *= atten.max(0.0);
        }
    }
}

/// Moves obstacles downhill according to the flux map of one relaxation.
pub fn advect_obstacles(obstacles: &[Obstacle], flux: &[f64], frame: &Frame, params: &SimParams) -> AdvectOutcome {
    let mut order: Vec<usize> = (0..obstacles.len()).collect();
    order.sort_by(|&a, &b| {
        obstacles[b]
            .y
            .total_cmp(&obstacles[a].y)
            .then(obstacles[a].id.cmp(&obstacles[b].id))
    });

    let mut work = flux.to_vec();
    let mut moved: Vec<Obstacle> = obstacles.to_vec();
    for &i in &order {
        let o = &obstacles[i];
        let driver = footprint_mean(frame, &work, o.x, o.y, o.radius);
        let mut next = *o;
        next.y -= params.obstacle_mobility * driver;
        cast_shadow(frame, &mut work, &next, params);
        moved[i] = next;
    }

    // runout: an obstacle cannot slide into one resting downhill of it
    for (k, &i) in order.iter().enumerate().rev() {
        let start = obstacles[i];
        let mut y = moved[i].y;
        for &j in &order[k + 1..] {
            let below = moved[j];
            if obstacles[j].y > start.y {
                continue;
            }
            let reach = start.radius + below.radius;
            let dx = start.x - below.x;
            if dx.abs() >= reach {
                continue;
            }
            let contact = below.y + (reach * reach - dx * dx).sqrt();
            let floor = contact.min(start.y);
            if y < floor {
                y = floor;
            }
        }
        moved[i].y = y;
    }

    let bounds = Bounds {
        width: frame.width as f64 * frame.cell,
        height: frame.height as f64 * frame.cell,
    };
    let mut events = Vec::new();
    for o in &mut moved {
        let (x, y, clamped) = bounds.clamp(o.x, o.y);
        if clamped {
            o.x = x;
            o.y = y;
            events.push(SimEvent::ObstacleLeftBounds(o.id));
        }
    }
    AdvectOutcome {
        obstacles: moved,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        Frame {
            width: 64,
            height: 64,
            cell: 0.9375,
        }
    }

    #[test]
    fn zero_flux_leaves_obstacles() {
        let f = frame();
        let obs = vec![Obstacle::standard(0, 20.0, 20.0), Obstacle::standard(1, 30.0, 40.0)];
        let out = advect_obstacles(&obs, &vec![0.0; f.len()], &f, &SimParams::default());
        assert_eq!(out.obstacles, obs);
        assert!(out.events.is_empty());
    }

    #[test]
    fn uniform_flux_moves_downhill() {
        let f = frame();
        let params = SimParams::default();
        let obs = vec![Obstacle::standard(0, 20.0, 20.0)];
        let out = advect_obstacles(&obs, &vec![1.0; f.len()], &f, &params);
        let o = out.obstacles[0];
        assert_eq!(o.x, 20.0);
        assert!((o.y - (20.0 - params.obstacle_mobility)).abs() < 1e-9);
    }

    #[test]
    fn uphill_neighbour_shields_and_blocks() {
        let f = frame();
        let params = SimParams::default();
        let flux = vec![0.5; f.len()];
        let lone = advect_obstacles(&[Obstacle::standard(0, 30.0, 20.0)], &flux, &f, &params);
        let pair = advect_obstacles(
            &[Obstacle::standard(0, 30.0, 20.0), Obstacle::standard(1, 30.0, 24.0)],
            &flux,
            &f,
            &params,
        );
        let d_lone = 20.0 - lone.obstacles[0].y;
        let d_pair = 20.0 - pair.obstacles[0].y;
        assert!(d_pair < d_lone);
        // the uphill disc never overlaps the downhill one
        let (a, b) = (pair.obstacles[0], pair.obstacles[1]);
        assert!((a.x - b.x).hypot(a.y - b.y) >= 4.0 - 1e-9);
    }

    #[test]
    fn leaving_the_field_is_clamped() {
        let f = frame();
        let params = SimParams::default();
        let obs = vec![Obstacle::standard(7, 20.0, 0.5)];
        let out = advect_obstacles(&obs, &vec![10.0; f.len()], &f, &params);
        assert_eq!(out.obstacles[0].y, 0.0);
        assert_eq!(out.events, vec![SimEvent::ObstacleLeftBounds(7)]);
    }
}
