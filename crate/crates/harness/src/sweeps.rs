//! Parameter sweeps over the simulator: obstacle interference against
//! spacing, and the pose change of each excavation action.

use std::fs;
use std::io::Write;
use std::path::Path;

use grain_core::sim::{
    interference_ratio, sim_step, Arrangement, Embodiment, InterferenceLayout, SimParams, CALIBRATION_SPACINGS,
    INTERFERENCE_TARGETS,
};
use grain_core::terrain::{Action, Heightfield, RobotGeometry, RobotState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plot::{Bar, BarChart, PALETTE};
use crate::Result;

/// Seeds per spacing in the interference sweep.
pub const INTERFERENCE_SEEDS: u64 = 5;
/// Seeds per action in the action sweep.
pub const ACTION_SEEDS: u64 = 3;
/// Largest shift of the obstacle pair between interference seeds, cm.
const JITTER_CM: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceRow {
    pub arrangement: Arrangement,
    pub gap: f64,
    pub seed: u64,
    pub ratio: f64,
}

fn arrangement_tag(a: Arrangement) -> &'static str {
    match a {
        Arrangement::ForeAft => "fore-aft",
        Arrangement::Lateral => "lateral",
    }
}

/// Seed 0 is the canonical layout; later seeds shift both obstacles by up to
/// [`JITTER_CM`] in each axis.
fn jitter(seed: u64) -> (f64, f64) {
    if seed == 0 {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        rng.gen_range(-JITTER_CM..JITTER_CM),
        rng.gen_range(-JITTER_CM..JITTER_CM),
    )
}

/// Displacement ratios of the canonical two-obstacle excavation at every
/// spacing, for both arrangements.
pub fn sweep_interference(params: &SimParams) -> Vec<InterferenceRow> {
    let layout = InterferenceLayout::default();
    let flux = layout.flux(params);
    let mut rows = Vec::new();
    for arrangement in [Arrangement::Lateral, Arrangement::ForeAft] {
        for gap in CALIBRATION_SPACINGS {
            for seed in 0..INTERFERENCE_SEEDS {
                let ratio = interference_ratio(&layout, &flux, params, arrangement, gap, jitter(seed));
                rows.push(InterferenceRow {
                    arrangement,
                    gap,
                    seed,
                    ratio,
                });
            }
        }
    }
    rows
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Mean and std of the ratio at one arrangement and gap.
pub fn ratio_stats(rows: &[InterferenceRow], arrangement: Arrangement, gap: f64) -> (f64, f64) {
    let v: Vec<f64> = rows
        .iter()
        .filter(|r| r.arrangement == arrangement && r.gap == gap)
        .map(|r| r.ratio)
        .collect();
    mean_std(&v)
}

/// Writes `interference.csv` and `interference.png` into `dir`.
pub fn write_interference(rows: &[InterferenceRow], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = fs::File::create(dir.join("interference.csv"))?;
    writeln!(out, "arrangement,gap_cm,seed,ratio")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6}",
            arrangement_tag(r.arrangement),
            r.gap,
            r.seed,
            r.ratio
        )?;
    }
    let groups = CALIBRATION_SPACINGS
        .iter()
        .map(|&g| {
            [Arrangement::Lateral, Arrangement::ForeAft]
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    let (value, err) = ratio_stats(rows, a, g);
                    Bar {
                        value,
                        err,
                        color: PALETTE[i],
                    }
                })
                .collect()
        })
        .collect();
    let mut refs: Vec<f64> = INTERFERENCE_TARGETS.iter().map(|t| t.1).collect();
    refs.push(1.0);
    BarChart {
        groups,
        y_range: (0.0, 1.2),
        refs,
    }
    .save(&dir.join("interference.png"), 480, 300)
}

/// Pose change statistics of one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionStats {
    pub action: Action,
    /// `(dx, dy, dphi)` per seed.
    pub samples: [(f64, f64, f64); ACTION_SEEDS as usize],
    pub mean: (f64, f64, f64),
    pub std: (f64, f64, f64),
}

/// Runs every action from the standard start, facing uphill in the middle of
/// an undisturbed bed, once per seed.
pub fn sweep_actions(params: &SimParams, geom: &RobotGeometry) -> Vec<ActionStats> {
    let hf = Heightfield::uniform(64, 64, 0.9375, 20f64.to_radians(), 1.5).expect("standard bed is valid");
    let start = RobotState::new(30.0, 30.0, 0.0);
    Action::ALL
        .iter()
        .map(|&action| {
            let mut samples = [(0.0, 0.0, 0.0); ACTION_SEEDS as usize];
            for (seed, s) in samples.iter_mut().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed ^ seed as u64);
                let out = sim_step(
                    &hf,
                    &start,
                    &[],
                    action,
                    geom,
                    params,
                    Some(&mut rng),
                    Embodiment::Robot,
                );
                let r = out.next_robot;
                *s = (r.x - start.x, r.y - start.y, r.phi - start.phi);
            }
            let (mx, sx) = mean_std(&samples.map(|s| s.0));
            let (my, sy) = mean_std(&samples.map(|s| s.1));
            let (mp, sp) = mean_std(&samples.map(|s| s.2));
            ActionStats {
                action,
                samples,
                mean: (mx, my, mp),
                std: (sx, sy, sp),
            }
        })
        .collect()
}

/// Writes `actions.csv` and `actions.png` into `dir`.
pub fn write_actions(stats: &[ActionStats], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = fs::File::create(dir.join("actions.csv"))?;
    writeln!(out, "action,dx_mean,dx_std,dy_mean,dy_std,dphi_mean,dphi_std")?;
    for s in stats {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.action, s.mean.0, s.std.0, s.mean.1, s.std.1, s.mean.2, s.std.2
        )?;
    }
    let groups = stats
        .iter()
        .map(|s| {
            [(s.mean.0, s.std.0), (s.mean.1, s.std.1), (s.mean.2, s.std.2)]
                .iter()
                .enumerate()
                .map(|(i, &(value, err))| Bar {
                    value,
                    err,
                    color: PALETTE[i],
                })
                .collect()
        })
        .collect();
    let hi = stats.iter().map(|s| s.mean.1 + s.std.1).fold(1.0, f64::max);
    BarChart {
        groups,
        y_range: (-1.0, hi * 1.1),
        refs: vec![],
    }
    .save(&dir.join("actions.png"), 480, 300)
}
