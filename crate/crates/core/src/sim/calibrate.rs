//! Fitting the interference constants to two-obstacle displacement ratios.
//!
//! The canonical layout is a gantry manipulator facing uphill that sweeps its
//! left front leg once. A measured obstacle sits in that leg's column below
//! the sweep; a companion obstacle is placed either uphill of it (fore-aft
//! arrangement) or beside it (lateral arrangement), separated by an
//! edge-to-edge gap. The ratio compares the measured obstacle's displacement
//! with and without the companion.

use crate::raster::Frame;
use crate::terrain::{Action, Heightfield, Obstacle, RobotGeometry, RobotState};

use super::{advect_obstacles, leg_footprint, step_with_cells, SimError, SimParams};

/// Gaps (cm) at which interference is evaluated.
pub const CALIBRATION_SPACINGS: [f64; 4] = [0.0, 2.0, 4.0, 8.0];

/// `(gap, ratio)` targets for the fore-aft arrangement.
pub const INTERFERENCE_TARGETS: [(f64, f64); 2] = [(0.0, 0.42), (2.0, 0.67)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrangement {
    ForeAft,
    Lateral,
}

/// Geometry of the canonical interference experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceLayout {
    pub manipulator: RobotState,
    /// Measured obstacle position.
    pub measured: (f64, f64),
    pub bed_depth: f64,
    pub slope_deg: f64,
}

impl Default for InterferenceLayout {
    fn default() -> Self {
        // left front sweep spans y in [39.5, 51.5] at x = 22.5; its sand runs out
        // between roughly y = 14 and y = 36
        let manipulator = RobotState::new(30.0, 38.0, 0.0);
        Self {
            manipulator,
            measured: (22.5, 20.0),
            bed_depth: 1.5,
            slope_deg: 20.0,
        }
    }
}

impl InterferenceLayout {
    fn bed(&self) -> Heightfield {
        Heightfield::uniform(64, 64, 0.9375, self.slope_deg.to_radians(), self.bed_depth)
            .expect("canonical bed is valid")
    }

    /// Companion position for a gap, offset by `jitter`.
    pub fn companion(&self, arrangement: Arrangement, gap: f64, radius: f64) -> (f64, f64) {
        let (mx, my) = self.measured;
        match arrangement {
            Arrangement::ForeAft => (mx, my + 2.0 * radius + gap),
            Arrangement::Lateral => (mx + 2.0 * radius + gap, my),
        }
    }

    /// Flux map of the canonical sweep. Obstacles do not alter the bed, so one
    /// map serves every layout.
    pub fn flux(&self, params: &SimParams) -> Vec<f64> {
        let hf = self.bed();
        let frame = Frame::of(&hf);
        let fp = leg_footprint(&frame, &self.manipulator, &RobotGeometry::default(), Action::Lfe);
        step_with_cells(&hf, &[], &fp.merged(), params).flux_map
    }

    pub fn frame(&self) -> Frame {
        Frame {
            width: 64,
            height: 64,
            cell: 0.9375,
        }
    }
}

/// Displacement ratio of the measured obstacle for a given flux map.
/// `jitter` shifts both obstacles together.
pub fn interference_ratio(
    layout: &InterferenceLayout,
    flux: &[f64],
    params: &SimParams,
    arrangement: Arrangement,
    gap: f64,
    jitter: (f64, f64),
) -> f64 {
    let frame = layout.frame();
    let (mx, my) = (layout.measured.0 + jitter.0, layout.measured.1 + jitter.1);
    let measured = Obstacle::standard(0, mx, my);
    let alone = advect_obstacles(&[measured], flux, &frame, params);
    let d_alone = my - alone.obstacles[0].y;
    let (cx, cy) = layout.companion(arrangement, gap, measured.radius);
    let companion = Obstacle::standard(1, cx + jitter.0, cy + jitter.1);
    let pair = advect_obstacles(&[measured, companion], flux, &frame, params);
    let d_pair = my - pair.obstacles[0].y;
    if d_alone <= 0.0 {
        return 1.0;
    }
    d_pair / d_alone
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    /// Fore-aft `(gap, ratio)` pairs at [`CALIBRATION_SPACINGS`].
    pub ratios: Vec<(f64, f64)>,
    /// Sum of squared ratio errors against [`INTERFERENCE_TARGETS`].
    pub error: f64,
}

/// Candidate values searched by [`calibrate_interference`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    pub mobility: Vec<f64>,
    pub block: Vec<f64>,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self {
            mobility: (1..=20).map(|k| k as f64 / 10.0).collect(),
            block: (0..=50).map(|k| k as f64 / 50.0).collect(),
        }
    }
}

fn fore_aft_ratios(layout: &InterferenceLayout, flux: &[f64], params: &SimParams) -> Vec<(f64, f64)> {
    CALIBRATION_SPACINGS
        .iter()
        .map(|&g| {
            (
                g,
                interference_ratio(layout, flux, params, Arrangement::ForeAft, g, (0.0, 0.0)),
            )
        })
        .collect()
}

fn is_ordered(r: &[(f64, f64)]) -> bool {
    r[0].1 < r[1].1 && r[1].1 < r[2].1 && r[2].1 <= r[3].1 && r[3].1 <= 1.0
}

/// Grid-searches `obstacle_mobility` and `flux_block` so the fore-aft ratios
/// at 0 and 2 cm match [`INTERFERENCE_TARGETS`], subject to strictly
/// increasing ratios over the first three gaps.
pub fn calibrate_interference(params: &SimParams, grid: &CalibrationGrid) -> Result<SimParams, SimError> {
    let layout = InterferenceLayout::default();
    let flux = layout.flux(params);
    // (error, params, fore-aft ratios)
    type Candidate = (f64, SimParams, Vec<(f64, f64)>);
    let mut best: Option<Candidate> = None;
    for &mobility in &grid.mobility {
        for &block in &grid.block {
            let trial = SimParams {
                obstacle_mobility: mobility,
                flux_block: block,
                ..params.clone()
            };
            let ratios = fore_aft_ratios(&layout, &flux, &trial);
            if !is_ordered(&ratios) {
                continue;
            }
            let err: f64 = INTERFERENCE_TARGETS
                .iter()
                .map(|(g, t)| {
                    let r = ratios.iter().find(|(s, _)| s == g).map(|p| p.1).unwrap_or(1.0);
                    (r - t).powi(2)
                })
                .sum();
            if best.as_ref().is_none_or(|b| err < b.0) {
                best = Some((err, trial, ratios));
            }
        }
    }
    let (error, mut out, ratios) = best.ok_or_else(|| {
        SimError::Calibration("no (mobility, flux_block) pair gives increasing displacement ratios".into())
    })?;
    out.calibration = Some(CalibrationRecord { ratios, error });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_targets() {
        let params = SimParams::default();
        let layout = InterferenceLayout::default();
        let flux = layout.flux(&params);
        let r = fore_aft_ratios(&layout, &flux, &params);
        assert!(is_ordered(&r), "{r:?}");
        for (g, t) in INTERFERENCE_TARGETS {
            let got = r.iter().find(|p| p.0 == g).unwrap().1;
            assert!((got - t).abs() < 0.15, "gap {g}: {got} vs {t}");
        }
    }

    #[test]
    fn calibration_recovers_defaults() {
        let start = SimParams {
            obstacle_mobility: 0.3,
            flux_block: 0.1,
            ..SimParams::default()
        };
        let c = calibrate_interference(&start, &CalibrationGrid::default()).unwrap();
        let rec = c.calibration.clone().unwrap();
        assert!(rec.error < 1e-3, "{rec:?}");
        let d = SimParams::default();
        assert!(
            (c.obstacle_mobility - d.obstacle_mobility).abs() < 1e-9,
            "{:?}",
            (c.obstacle_mobility, c.flux_block, rec)
        );
        assert!((c.flux_block - d.flux_block).abs() < 1e-9);
    }

    #[test]
    fn no_blocking_cannot_calibrate() {
        let grid = CalibrationGrid {
            mobility: vec![0.5, 1.0],
            block: vec![0.0],
        };
        assert!(matches!(
            calibrate_interference(&SimParams::default(), &grid),
            Err(SimError::Calibration(_))
        ));
        let params = SimParams {
            flux_block: 0.0,
            ..SimParams::default()
        };
        let layout = InterferenceLayout::default();
        let flux = layout.flux(&params);
        for (_, r) in fore_aft_ratios(&layout, &flux, &params) {
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn lateral_companion_interferes_less() {
        let params = SimParams::default();
        let layout = InterferenceLayout::default();
        let flux = layout.flux(&params);
        let fa = interference_ratio(&layout, &flux, &params, Arrangement::ForeAft, 0.0, (0.0, 0.0));
        let lat = interference_ratio(&layout, &flux, &params, Arrangement::Lateral, 0.0, (0.0, 0.0));
        assert!(lat > fa);
    }
}
