//! Line-oriented text formats for scenarios and simulator parameters.
//!
//! Both formats are UTF-8, one `key = value` pair per line. `#` starts a
//! comment, blank lines are skipped and keys may come in any order.
//!
//! Scenario keys:
//!
//! ```text
//! mode = loco-manipulation          # manipulation | locomotion | loco-manipulation
//! grid = 64,64                      # width,height in cells
//! cell = 0.9375                     # cm
//! slope_deg = 20                    # or slope_rad
//! bed_depth = 1.5                   # uniform bed, cm
//! robot = 30,30,0                   # x,y,phi (rad)
//! obstacle = 0,22.5,16,2,2          # id,x,y,radius,height; repeatable
//! target = 17,13                    # point goal for the next obstacle; repeatable
//! target = below,14.5               # half-plane goal y <= 14.5
//! robot_target = 30,40
//! success_radius = 3
//! max_steps = 15
//! seed = 101
//! ```
//!
//! Targets pair with obstacles in file order. Numbers are written with the
//! shortest representation that reads back to the same `f64`, so
//! write-then-parse is exact.

use std::fmt::Write as _;
use std::str::FromStr;

use grain_core::sim::{ActionEffect, CalibrationRecord, SimParams};
use grain_core::terrain::{Action, Goal, Heightfield, Mode, Obstacle, RobotState, Scenario};

use crate::{HarnessError, Result};

fn perr(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse { line, msg: msg.into() }
}

/// `(line number, key, value)` for every non-empty line.
fn pairs(text: &str) -> Result<Vec<(usize, &str, &str)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| perr(i + 1, format!("expected 'key = value', got '{line}'")))?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

fn num<T: FromStr>(line: usize, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| perr(line, format!("bad number '{}'", s.trim())))
}

fn nums(line: usize, s: &str, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s.split(',').map(|p| num(line, p)).collect::<Result<_>>()?;
    if v.len() != n {
        return Err(perr(
            line,
            format!("expected {n} comma-separated values, got {}", v.len()),
        ));
    }
    Ok(v)
}

#[derive(Default)]
struct Draft {
    mode: Option<Mode>,
    grid: Option<(usize, usize)>,
    cell: Option<f64>,
    slope: Option<f64>,
    depth: Option<f64>,
    robot: Option<RobotState>,
    obstacles: Vec<Obstacle>,
    targets: Vec<Goal>,
    robot_target: Option<(f64, f64)>,
    success_radius: Option<f64>,
    max_steps: Option<usize>,
    seed: Option<u64>,
}

fn set<T>(slot: &mut Option<T>, v: T, line: usize, key: &str) -> Result<()> {
    if slot.replace(v).is_some() {
        return Err(perr(line, format!("duplicate key '{key}'")));
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut d = Draft::default();
    for (line, key, val) in pairs(text)? {
        match key {
            "mode" => set(
                &mut d.mode,
                Mode::from_str(val).map_err(|e| perr(line, e.to_string()))?,
                line,
                key,
            )?,
            "grid" => {
                let p: Vec<usize> = val.split(',').map(|s| num(line, s)).collect::<Result<_>>()?;
                if p.len() != 2 {
                    return Err(perr(line, "grid needs width,height"));
                }
                set(&mut d.grid, (p[0], p[1]), line, key)?
            }
            "cell" => set(&mut d.cell, num(line, val)?, line, key)?,
            "slope_deg" => set(&mut d.slope, num::<f64>(line, val)?.to_radians(), line, "slope")?,
            "slope_rad" => set(&mut d.slope, num(line, val)?, line, "slope")?,
            "bed_depth" => set(&mut d.depth, num(line, val)?, line, key)?,
            "robot" => {
                let v = nums(line, val, 3)?;
                set(&mut d.robot, RobotState::new(v[0], v[1], v[2]), line, key)?
            }
            "obstacle" => {
                let v = nums(line, val, 5)?;
                if v[0] < 0.0 || v[0].fract() != 0.0 {
                    return Err(perr(line, "obstacle id must be a non-negative integer"));
                }
                d.obstacles.push(Obstacle {
                    id: v[0] as u32,
                    x: v[1],
                    y: v[2],
                    radius: v[3],
                    height: v[4],
                });
            }
            "target" => {
                let goal = match val.split_once(',') {
                    Some((kind, y)) if kind.trim() == "below" => Goal::Below { y_line: num(line, y)? },
                    _ => {
                        let v = nums(line, val, 2)?;
                        Goal::Point { x: v[0], y: v[1] }
                    }
                };
                d.targets.push(goal);
            }
            "robot_target" => {
                let v = nums(line, val, 2)?;
                set(&mut d.robot_target, (v[0], v[1]), line, key)?
            }
            "success_radius" => set(&mut d.success_radius, num(line, val)?, line, key)?,
            "max_steps" => set(&mut d.max_steps, num(line, val)?, line, key)?,
            "seed" => set(&mut d.seed, num(line, val)?, line, key)?,
            other => return Err(perr(line, format!("unknown key '{other}'"))),
        }
    }
    let need = |what: &str| HarnessError::Invalid(format!("scenario is missing '{what}'"));
    let (w, h) = d.grid.ok_or_else(|| need("grid"))?;
    let heightfield = Heightfield::uniform(
        w,
        h,
        d.cell.ok_or_else(|| need("cell"))?,
        d.slope.ok_or_else(|| need("slope_deg"))?,
        d.depth.ok_or_else(|| need("bed_depth"))?,
    )?;
    let scenario = Scenario {
        mode: d.mode.ok_or_else(|| need("mode"))?,
        heightfield,
        robot_start: d.robot.ok_or_else(|| need("robot"))?,
        obstacles: d.obstacles,
        obstacle_targets: d.targets,
        robot_target: d.robot_target,
        success_radius: d.success_radius.ok_or_else(|| need("success_radius"))?,
        max_steps: d.max_steps.ok_or_else(|| need("max_steps"))?,
        rng_seed: d.seed.unwrap_or(0),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Slope line, in degrees when that reads back exactly.
fn slope_line(rad: f64) -> String {
    let deg = rad.to_degrees();
    for cand in [deg, (deg * 1e6).round() / 1e6] {
        if cand.to_radians() == rad {
            return format!("slope_deg = {cand}");
        }
    }
    format!("slope_rad = {rad}")
}

/// Serialises a scenario on a uniform bed.
pub fn write_scenario(s: &Scenario) -> Result<String> {
    let hf = &s.heightfield;
    let depth = hf.heights()[0];
    if hf.heights().iter().any(|h| *h != depth) {
        return Err(HarnessError::Invalid(
            "only uniform beds can be written as scenario text".into(),
        ));
    }
    let mut o = String::new();
    let _ = writeln!(o, "mode = {}", s.mode.tag());
    let _ = writeln!(o, "grid = {},{}", hf.width_cells(), hf.height_cells());
    let _ = writeln!(o, "cell = {}", hf.cell_size());
    let _ = writeln!(o, "{}", slope_line(hf.slope_angle()));
    let _ = writeln!(o, "bed_depth = {depth}");
    let r = s.robot_start;
    let _ = writeln!(o, "robot = {},{},{}", r.x, r.y, r.phi);
    for ob in &s.obstacles {
        let _ = writeln!(o, "obstacle = {},{},{},{},{}", ob.id, ob.x, ob.y, ob.radius, ob.height);
    }
    for g in &s.obstacle_targets {
        let _ = match *g {
            Goal::Point { x, y } => writeln!(o, "target = {x},{y}"),
            Goal::Below { y_line } => writeln!(o, "target = below,{y_line}"),
        };
    }
    if let Some((x, y)) = s.robot_target {
        let _ = writeln!(o, "robot_target = {x},{y}");
    }
    let _ = writeln!(o, "success_radius = {}", s.success_radius);
    let _ = writeln!(o, "max_steps = {}", s.max_steps);
    let _ = writeln!(o, "seed = {}", s.rng_seed);
    Ok(o)
}

/// Parameter keys. Missing keys keep their defaults; per-action rows read
/// `action.<TAG> = dx,dy,dphi,std_dx,std_dy,std_dphi`. A calibration run
/// adds `calibration_ratios = gap:ratio,...` and `calibration_error`.
pub fn parse_params(text: &str) -> Result<SimParams> {
    let mut p = SimParams::default();
    let mut ratios: Option<Vec<(f64, f64)>> = None;
    let mut error: Option<f64> = None;
    for (line, key, val) in pairs(text)? {
        match key {
            "repose_tan" => p.repose_tan = num(line, val)?,
            "relax_fraction" => p.relax_fraction = num(line, val)?,
            "max_relax_passes" => p.max_relax_passes = num(line, val)?,
            "dig_depth" => p.dig_depth = num(line, val)?,
            "deposit_offset" => p.deposit_offset = num(line, val)?,
            "obstacle_mobility" => p.obstacle_mobility = num(line, val)?,
            "flux_block" => p.flux_block = num(line, val)?,
            "shadow_length" => p.shadow_length = num(line, val)?,
            "rng_seed" => p.rng_seed = num(line, val)?,
            "calibration_error" => error = Some(num(line, val)?),
            "calibration_ratios" => {
                let mut v = Vec::new();
                for part in val.split(',') {
                    let (g, r) = part
                        .split_once(':')
                        .ok_or_else(|| perr(line, format!("expected gap:ratio, got '{part}'")))?;
                    v.push((num(line, g)?, num(line, r)?));
                }
                ratios = Some(v);
            }
            k if k.starts_with("action.") => {
                let a = Action::from_str(&k["action.".len()..]).map_err(|e| perr(line, e.to_string()))?;
                let v = nums(line, val, 6)?;
                p.action_table[a.index()] = ActionEffect::new(v[0], v[1], v[2], v[3], v[4], v[5]);
            }
            other => return Err(perr(line, format!("unknown key '{other}'"))),
        }
    }
    p.calibration = match (ratios, error) {
        (Some(ratios), Some(error)) => Some(CalibrationRecord { ratios, error }),
        (None, None) => None,
        _ => {
            return Err(HarnessError::Invalid(
                "calibration_ratios and calibration_error come together".into(),
            ))
        }
    };
    p.validate()?;
    Ok(p)
}

pub fn write_params(p: &SimParams) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "repose_tan = {}", p.repose_tan);
    let _ = writeln!(o, "relax_fraction = {}", p.relax_fraction);
    let _ = writeln!(o, "max_relax_passes = {}", p.max_relax_passes);
    let _ = writeln!(o, "dig_depth = {}", p.dig_depth);
    let _ = writeln!(o, "deposit_offset = {}", p.deposit_offset);
    let _ = writeln!(o, "obstacle_mobility = {}", p.obstacle_mobility);
    let _ = writeln!(o, "flux_block = {}", p.flux_block);
    let _ = writeln!(o, "shadow_length = {}", p.shadow_length);
    let _ = writeln!(o, "rng_seed = {}", p.rng_seed);
    for a in Action::ALL {
        let e = p.action_table[a.index()];
        let _ = writeln!(
            o,
            "action.{} = {},{},{},{},{},{}",
            a.tag(),
            e.dx,
            e.dy,
            e.dphi,
            e.std_dx,
            e.std_dy,
            e.std_dphi
        );
    }
    if let Some(c) = &p.calibration {
        let r: Vec<String> = c.ratios.iter().map(|(g, r)| format!("{g}:{r}")).collect();
        let _ = writeln!(o, "calibration_ratios = {}", r.join(","));
        let _ = writeln!(o, "calibration_error = {}", c.error);
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let s = parse_scenario(
            "# bed\nmode = manipulation\n\ngrid = 32,32\ncell = 1\nslope_deg = 20 # tilt\nbed_depth = 1.5\n\
             robot = 16,20,0\nobstacle = 0,16,8,2,2\ntarget = below,5\nsuccess_radius = 2\nmax_steps = 4\n",
        )
        .unwrap();
        assert_eq!(s.obstacle_targets, vec![Goal::Below { y_line: 5.0 }]);
        assert_eq!(s.rng_seed, 0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_scenario("mode = manipulation\ngrid = 32\n") {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_scenario("colour = red"),
            Err(HarnessError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_params("flux_block = 0.5\nflux_block 0.2"),
            Err(HarnessError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn degrees_are_kept_when_exact() {
        assert_eq!(slope_line(20f64.to_radians()), "slope_deg = 20");
        assert!(slope_line(0.3).starts_with("slope_"));
    }
}
