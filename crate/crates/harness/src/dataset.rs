//! Simulator transition datasets for training the predictors.
//!
//! A dataset directory holds a copy of its manifest, an `index.csv` and an
//! `images/` folder. Index paths are relative to the directory. While
//! generation runs an `INCOMPLETE` marker sits next to the index; it is
//! removed on success and keeps the error message on failure.
//!
//! Manifest keys:
//!
//! ```text
//! embodiment = manipulator          # or robot
//! format_version = 1
//! steps_per_trial = 6
//! seed = 7
//! trial = 15,LP|RP|FP|AF,3,6        # orientation deg, action set, layout seed, count
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use grain_core::encoding::{
    read_action_ppm, read_delta_pgm, read_depth_pgm, render_action, render_depth, robot_term, write_action_ppm,
    write_delta_pgm, write_depth_pgm, DeltaImage, DepthImage,
};
use grain_core::raster::Frame;
use grain_core::sim::{sim_step, Embodiment, SimEvent, SimParams};
use grain_core::terrain::{Action, Heightfield, Obstacle, RobotGeometry, RobotState};
use grain_surrogate::Sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::ModelKind;
use crate::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const ORIENTATIONS_DEG: [u32; 3] = [0, 15, 30];
const MARKER: &str = "INCOMPLETE";

/// Size of the full-scale collection, kept for reference only.
pub const ORIGINAL_MANIPULATOR_TRIALS: usize = 240;
pub const ORIGINAL_MANIPULATOR_IMAGES: usize = 24_590;
pub const ORIGINAL_ROBOT_TRIALS: usize = 60;
pub const ORIGINAL_ROBOT_IMAGES: usize = 13_480;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    /// Heading away from straight uphill, degrees; alternates sign per trial.
    pub orientation_deg: u32,
    /// Actions drawn uniformly at each step.
    pub actions: Vec<Action>,
    pub layout_seed: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub embodiment: Embodiment,
    pub trials: Vec<TrialSpec>,
    pub steps_per_trial: usize,
    pub seed: u64,
    pub format_version: u32,
}

impl DatasetManifest {
    /// Desk-scale gantry collection: per orientation, six trials over the
    /// paired and four-leg actions plus one each with a single front leg.
    pub fn manipulator_desk() -> Self {
        use Action::*;
        let mut trials = Vec::new();
        for (k, &o) in ORIENTATIONS_DEG.iter().enumerate() {
            let s = 10 * k as u64;
            trials.push(TrialSpec {
                orientation_deg: o,
                actions: vec![Lp, Rp, Fp, Af],
                layout_seed: s,
                count: 6,
            });
            trials.push(TrialSpec {
                orientation_deg: o,
                actions: vec![Lfe],
                layout_seed: s + 1,
                count: 1,
            });
            trials.push(TrialSpec {
                orientation_deg: o,
                actions: vec![Rfe],
                layout_seed: s + 2,
                count: 1,
            });
        }
        Self {
            embodiment: Embodiment::Manipulator,
            trials,
            steps_per_trial: 6,
            seed: 1,
            format_version: FORMAT_VERSION,
        }
    }

    /// Desk-scale robot collection: four trials per orientation over all actions.
    pub fn robot_desk() -> Self {
        let trials = ORIENTATIONS_DEG
            .iter()
            .enumerate()
            .map(|(k, &o)| TrialSpec {
                orientation_deg: o,
                actions: Action::ALL.to_vec(),
                layout_seed: 100 + k as u64,
                count: 4,
            })
            .collect();
        Self {
            embodiment: Embodiment::Robot,
            trials,
            steps_per_trial: 6,
            seed: 2,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn trial_count(&self) -> usize {
        self.trials.iter().map(|t| t.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(HarnessError::Invalid(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        if self.trials.is_empty() || self.steps_per_trial == 0 {
            return Err(HarnessError::Invalid(
                "manifest needs trials and steps_per_trial >= 1".into(),
            ));
        }
        for t in &self.trials {
            if !ORIENTATIONS_DEG.contains(&t.orientation_deg) {
                return Err(HarnessError::Invalid(format!(
                    "orientation {} is not one of {ORIENTATIONS_DEG:?}",
                    t.orientation_deg
                )));
            }
            if t.actions.is_empty() {
                return Err(HarnessError::Invalid("trial with an empty action set".into()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self {
            embodiment: Embodiment::Manipulator,
            trials: Vec::new(),
            steps_per_trial: 0,
            seed: 0,
            format_version: FORMAT_VERSION,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| HarnessError::Parse { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let v = v.trim();
            let n = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| err(format!("bad number '{}'", s.trim())))
            };
            match k.trim() {
                "embodiment" => m.embodiment = Embodiment::from_str(v).map_err(|e| err(e.to_string()))?,
                "format_version" => m.format_version = n(v)? as u32,
                "steps_per_trial" => m.steps_per_trial = n(v)? as usize,
                "seed" => m.seed = n(v)?,
                "trial" => {
                    let p: Vec<&str> = v.split(',').collect();
                    if p.len() != 4 {
                        return Err(err("trial needs orientation,actions,layout_seed,count".into()));
                    }
                    let actions = p[1]
                        .split('|')
                        .map(|a| Action::from_str(a).map_err(|e| err(e.to_string())))
                        .collect::<Result<Vec<_>>>()?;
                    m.trials.push(TrialSpec {
                        orientation_deg: n(p[0])? as u32,
                        actions,
                        layout_seed: n(p[2])?,
                        count: n(p[3])? as usize,
                    });
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "embodiment = {}", self.embodiment.tag());
        let _ = writeln!(o, "format_version = {}", self.format_version);
        let _ = writeln!(o, "steps_per_trial = {}", self.steps_per_trial);
        let _ = writeln!(o, "seed = {}", self.seed);
        for t in &self.trials {
            let a: Vec<&str> = t.actions.iter().map(|a| a.tag()).collect();
            let _ = writeln!(
                o,
                "trial = {},{},{},{}",
                t.orientation_deg,
                a.join("|"),
                t.layout_seed,
                t.count
            );
        }
        o
    }
}

/// One row of `index.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub trial: usize,
    pub step: usize,
    pub embodiment: Embodiment,
    pub action: Action,
    pub depth_in: String,
    pub action_img: String,
    pub env_delta: String,
    pub robot_delta: String,
}

const HEADER: [&str; 8] = [
    "trial",
    "step",
    "embodiment",
    "action",
    "depth_in",
    "action_img",
    "env_delta",
    "robot_delta",
];

/// What a generation run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    /// Recorded steps per trial, in trial order.
    pub steps: Vec<usize>,
}

impl GenSummary {
    pub fn rows(&self) -> usize {
        self.steps.iter().sum()
    }
}

fn bed() -> Heightfield {
    Heightfield::uniform(64, 64, 0.9375, 20f64.to_radians(), 1.5).expect("standard bed is valid")
}

/// Start pose and obstacles for one trial. Obstacles sit in the leg columns
/// below the body, where the excavated sand runs out.
fn layout(
    orientation_deg: u32,
    sign: f64,
    embodiment: Embodiment,
    rng: &mut ChaCha8Rng,
) -> (RobotState, Vec<Obstacle>) {
    let phi = sign * (orientation_deg as f64).to_radians();
    let y = match embodiment {
        Embodiment::Manipulator => rng.gen_range(32.0..40.0),
        Embodiment::Robot => rng.gen_range(24.0..32.0),
    };
    let robot = RobotState::new(rng.gen_range(26.0..34.0), y, phi);
    let which = rng.gen_range(0..3);
    let mut obstacles = Vec::new();
    for (k, u) in [-7.5, 7.5].into_iter().enumerate() {
        if which == 2 || which == k {
            let (x, y) = robot.body_to_world(u + rng.gen_range(-1.5..1.5), rng.gen_range(-18.0..-11.0));
            obstacles.push(Obstacle::standard(obstacles.len() as u32, x, y));
        }
    }
    (robot, obstacles)
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

fn run_trials(manifest: &DatasetManifest, params: &SimParams, geom: &RobotGeometry, dir: &Path) -> Result<GenSummary> {
    fs::create_dir_all(dir.join("images"))?;
    fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    let mut index = csv::Writer::from_path(dir.join("index.csv"))?;
    index.write_record(HEADER)?;
    let mut summary = GenSummary { steps: Vec::new() };
    let mut trial = 0usize;
    for spec in &manifest.trials {
        for copy in 0..spec.count {
            let mut layout_rng = ChaCha8Rng::seed_from_u64(spec.layout_seed.wrapping_mul(1_000_003) ^ copy as u64);
            let sign = if copy % 2 == 0 { 1.0 } else { -1.0 };
            let (mut robot, mut obstacles) = layout(spec.orientation_deg, sign, manifest.embodiment, &mut layout_rng);
            let mut hf = bed();
            let frame = Frame::of(&hf);
            let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed ^ ((trial as u64) << 20));
            let body = |r: &RobotState| (manifest.embodiment == Embodiment::Robot).then_some(*r);
            let mut recorded = 0;
            for step in 0..manifest.steps_per_trial {
                let action = spec.actions[rng.gen_range(0..spec.actions.len())];
                let img = render_depth(&hf, body(&robot).as_ref(), &obstacles, geom);
                let a_img = render_action(&frame, &robot, geom, action);
                let out = sim_step(
                    &hf,
                    &robot,
                    &obstacles,
                    action,
                    geom,
                    params,
                    Some(&mut rng),
                    manifest.embodiment,
                );
                if out
                    .events
                    .iter()
                    .any(|e| matches!(e, SimEvent::RobotLeftBounds | SimEvent::ObstacleLeftBounds(_)))
                {
                    break;
                }
                let (env, rob) = match manifest.embodiment {
                    Embodiment::Manipulator => {
                        let next = render_depth(&out.next_heightfield, None, &out.next_obstacles, geom);
                        (DeltaImage::between(&img, &next)?, DeltaImage::zeros(frame))
                    }
                    Embodiment::Robot => {
                        let mut old = vec![false; frame.len()];
                        for (i, _) in robot_term(&frame, &robot, geom) {
                            old[i] = true;
                        }
                        let mut region = old.clone();
                        for (i, _) in robot_term(&frame, &out.next_robot, geom) {
                            region[i] = true;
                        }
                        let bare = render_depth(&out.next_heightfield, None, &out.next_obstacles, geom);
                        let full =
                            render_depth(&out.next_heightfield, Some(&out.next_robot), &out.next_obstacles, geom);
                        (
                            DeltaImage::between(&img, &bare)?.masked(|i| !old[i]),
                            DeltaImage::between(&img, &full)?.masked(|i| region[i]),
                        )
                    }
                };
                let stem = format!("images/t{trial:04}_s{step:03}");
                let names = [
                    format!("{stem}_depth.pgm"),
                    format!("{stem}_action.ppm"),
                    format!("{stem}_env.pgm"),
                    format!("{stem}_robot.pgm"),
                ];
                write_with(&dir.join(&names[0]), |o| Ok(write_depth_pgm(&img, o)?))?;
                write_with(&dir.join(&names[1]), |o| Ok(write_action_ppm(&a_img, o)?))?;
                write_with(&dir.join(&names[2]), |o| Ok(write_delta_pgm(&env, o)?))?;
                write_with(&dir.join(&names[3]), |o| Ok(write_delta_pgm(&rob, o)?))?;
                index.write_record([
                    trial.to_string(),
                    step.to_string(),
                    manifest.embodiment.tag().to_string(),
                    action.tag().to_string(),
                    names[0].clone(),
                    names[1].clone(),
                    names[2].clone(),
                    names[3].clone(),
                ])?;
                recorded += 1;
                hf = out.next_heightfield;
                robot = out.next_robot;
                obstacles = out.next_obstacles;
            }
            summary.steps.push(recorded);
            trial += 1;
        }
    }
    index.flush()?;
    Ok(summary)
}

/// Rolls every trial of the manifest through the simulator and writes the
/// dataset into `dir`. A trial stops early if the robot or an obstacle
/// leaves the field; that step is not recorded.
pub fn gen_dataset(
    manifest: &DatasetManifest,
    params: &SimParams,
    geom: &RobotGeometry,
    dir: &Path,
) -> Result<GenSummary> {
    manifest.validate()?;
    params.validate()?;
    fs::create_dir_all(dir)?;
    let marker = dir.join(MARKER);
    fs::write(&marker, "generation in progress\n")?;
    match run_trials(manifest, params, geom, dir) {
        Ok(s) => {
            fs::remove_file(&marker)?;
            Ok(s)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("generation failed: {e}\n"));
            Err(e)
        }
    }
}

pub fn read_index(dir: &Path) -> Result<Vec<IndexRow>> {
    if dir.join(MARKER).exists() {
        return Err(HarnessError::Invalid(format!(
            "{} holds an incomplete dataset",
            dir.display()
        )));
    }
    let mut rd = csv::Reader::from_path(dir.join("index.csv"))?;
    if rd.headers()?.iter().ne(HEADER) {
        return Err(HarnessError::Invalid("index.csv has unexpected columns".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let bad = |what: &str| HarnessError::Invalid(format!("index row {}: bad {what}", rows.len() + 1));
        rows.push(IndexRow {
            trial: rec[0].parse().map_err(|_| bad("trial"))?,
            step: rec[1].parse().map_err(|_| bad("step"))?,
            embodiment: Embodiment::from_str(&rec[2]).map_err(|_| bad("embodiment"))?,
            action: Action::from_str(&rec[3]).map_err(|_| bad("action"))?,
            depth_in: rec[4].to_string(),
            action_img: rec[5].to_string(),
            env_delta: rec[6].to_string(),
            robot_delta: rec[7].to_string(),
        });
    }
    Ok(rows)
}

fn open(dir: &Path, rel: &str) -> Result<BufReader<File>> {
    let p: PathBuf = dir.join(rel);
    File::open(&p)
        .map(BufReader::new)
        .map_err(|e| HarnessError::Invalid(format!("{}: {e}", p.display())))
}

pub fn load_depth(dir: &Path, rel: &str) -> Result<DepthImage> {
    Ok(read_depth_pgm(&mut open(dir, rel)?)?)
}

/// Training samples for one network: environment deltas for the
/// environment net, robot deltas for the robot net.
pub fn load_samples(dir: &Path, kind: ModelKind) -> Result<Vec<Sample>> {
    read_index(dir)?
        .iter()
        .map(|r| {
            let target = match kind {
                ModelKind::Env => &r.env_delta,
                ModelKind::Robot => &r.robot_delta,
            };
            Ok(Sample {
                depth: load_depth(dir, &r.depth_in)?,
                action: read_action_ppm(&mut open(dir, &r.action_img)?)?,
                target: read_delta_pgm(&mut open(dir, target)?)?,
            })
        })
        .collect()
}
