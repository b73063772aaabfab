use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use grain_core::encoding::{render_action, render_depth, write_action_ppm, write_depth_pgm};
use grain_core::raster::Frame;
use grain_core::sim::{calibrate_interference, sim_step, CalibrationGrid, Embodiment, SimParams};
use grain_core::terrain::{Action, RobotGeometry, Scenario};
use grain_harness::checkpoint::{load_model, save_model, Model, ModelKind};
use grain_harness::dataset::{gen_dataset, load_samples, DatasetManifest};
use grain_harness::eval::{evaluate, evaluate_with};
use grain_harness::plot::{action_preview, depth_preview};
use grain_harness::suite::{loco_manipulation_suite, ScriptedPolicy};
use grain_harness::sweeps::{sweep_actions, sweep_interference, write_actions, write_interference};
use grain_harness::textfmt::{parse_params, parse_scenario, write_params, write_scenario};
use grain_planning::{execute_policy, CostWeights, Policy, RandomPolicy, SimEnv};
use grain_surrogate::{
    train_f_e, train_f_r, DiffusionConfig, LearnedPredictor, OraclePredictor, Predictor, TrainConfig, UNetConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Granular slope simulator, predictors and planner.
#[derive(Debug, Parser)]
#[command(name = "grain", version)]
struct Cli {
    /// Seed overriding the one in the scenario, manifest or parameter file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Simulator parameter file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a fixed action sequence through the simulator.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated actions, e.g. AF,LP,AF.
        #[arg(long, value_delimiter = ',', required = true)]
        actions: Vec<String>,
        #[arg(long, value_enum, default_value_t = Body::Robot)]
        embodiment: Body,
    },
    /// Generate a training dataset.
    GenData {
        /// Manifest file; defaults to the desk-scale manifest for --desk.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Body::Manipulator)]
        desk: Body,
    },
    /// Train the environment (f-e) or robot (f-r) predictor on a dataset.
    Train {
        #[arg(value_enum)]
        net: Net,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        base: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Diffusion steps for f-e.
        #[arg(long, default_value_t = 150)]
        diffusion_steps: usize,
        /// Disable obstacle pasting for f-r.
        #[arg(long)]
        no_augment: bool,
    },
    /// Plan and act on one scenario.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Evaluate a policy over a scenario set.
    Eval {
        /// Directory of scenario files; the built-in suite when omitted.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyKind::Planner)]
        policy: PolicyKind,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Fit the interference constants and write the parameter file.
    Calibrate,
    /// Run a parameter sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepKind,
    },
    /// Render a scenario's start state as PGM and PNG.
    Render {
        #[arg(long)]
        scenario: PathBuf,
        /// Also render this action's image at the start pose.
        #[arg(long)]
        action: Option<String>,
        #[arg(long, default_value_t = 4)]
        scale: u32,
    },
    /// Write the built-in loco-manipulation suite as scenario files.
    Suite,
}

#[derive(Debug, Args)]
struct PlannerArgs {
    #[arg(long, value_enum, default_value_t = PredictorArg::Oracle)]
    predictor: PredictorArg,
    /// Environment model checkpoint for the learned predictor.
    #[arg(long)]
    env_model: Option<PathBuf>,
    /// Robot model checkpoint for the learned predictor.
    #[arg(long)]
    robot_model: Option<PathBuf>,
    /// Plan with the unadjusted action image.
    #[arg(long)]
    no_eaa: bool,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Body {
    Robot,
    Manipulator,
}

impl From<Body> for Embodiment {
    fn from(b: Body) -> Self {
        match b {
            Body::Robot => Embodiment::Robot,
            Body::Manipulator => Embodiment::Manipulator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Net {
    #[value(name = "f-e", alias = "f_e")]
    FE,
    #[value(name = "f-r", alias = "f_r")]
    FR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PredictorArg {
    Oracle,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Planner,
    Random,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Interference,
    Actions,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_params(cli: &Cli) -> Result<SimParams> {
    let mut p = match &cli.config {
        Some(path) => parse_params(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?,
        None => SimParams::default(),
    };
    if let Some(s) = cli.seed {
        p.rng_seed = s;
    }
    Ok(p)
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let mut s = parse_scenario(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        s.rng_seed = seed;
    }
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn predictor(
    args: &PlannerArgs,
    params: &SimParams,
    geom: RobotGeometry,
    slope: f64,
    seed: u64,
) -> Result<Box<dyn Predictor>> {
    match args.predictor {
        PredictorArg::Oracle => Ok(Box::new(OraclePredictor::new(
            params.clone(),
            geom,
            Embodiment::Robot,
            slope,
        ))),
        PredictorArg::Learned => {
            let (Some(e), Some(r)) = (&args.env_model, &args.robot_model) else {
                bail!("--predictor learned needs --env-model and --robot-model");
            };
            let env = load_model(e).with_context(|| format!("loading {}", e.display()))?;
            let rob = load_model(r).with_context(|| format!("loading {}", r.display()))?;
            if env.kind != ModelKind::Env || rob.kind != ModelKind::Robot {
                bail!("--env-model must hold f_e and --robot-model f_r");
            }
            let diffusion = env.diffusion.clone().unwrap_or_default();
            Ok(Box::new(LearnedPredictor::new(
                (env.net(), env.params),
                Some((rob.net(), rob.params)),
                &diffusion,
                seed,
                Embodiment::Robot,
            )?))
        }
    }
}

fn weights(args: &PlannerArgs) -> CostWeights {
    CostWeights {
        horizon: args.horizon,
        ..Default::default()
    }
}

fn run(cli: Cli) -> Result<()> {
    let geom = RobotGeometry::default();
    let params = load_params(&cli)?;
    let out = cli.out.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let env = SimEnv {
        params: &params,
        geom: &geom,
    };

    match &cli.cmd {
        Cmd::Simulate {
            scenario,
            actions,
            embodiment,
        } => {
            let s = load_scenario(scenario, cli.seed)?;
            let actions: Vec<Action> = actions.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
            let body = Embodiment::from(*embodiment);
            let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed);
            let (mut hf, mut robot, mut obstacles) = (s.heightfield.clone(), s.robot_start, s.obstacles.clone());
            let mut csv = create(&out.join("simulate.csv"))?;
            write!(csv, "step,action,robot_x,robot_y,robot_phi,volume,relax_passes,events")?;
            for o in &obstacles {
                write!(csv, ",obs{}_x,obs{}_y", o.id, o.id)?;
            }
            writeln!(csv)?;
            let shown = |r| (body == Embodiment::Robot).then_some(r);
            for (k, a) in actions.iter().enumerate() {
                let step = sim_step(&hf, &robot, &obstacles, *a, &geom, &params, Some(&mut rng), body);
                (hf, robot, obstacles) = (step.next_heightfield, step.next_robot, step.next_obstacles);
                let events: Vec<String> = step.events.iter().map(|e| e.tag()).collect();
                write!(
                    csv,
                    "{k},{a},{:.6},{:.6},{:.6},{:.9},{},{}",
                    robot.x,
                    robot.y,
                    robot.phi,
                    hf.volume(),
                    step.relax_passes,
                    events.join("|")
                )?;
                for o in &obstacles {
                    write!(csv, ",{:.6},{:.6}", o.x, o.y)?;
                }
                writeln!(csv)?;
                let img = render_depth(&hf, shown(robot).as_ref(), &obstacles, &geom);
                write_depth_pgm(&img, &mut create(&out.join(format!("step_{k:03}.pgm")))?)?;
            }
            csv.flush()?;
            println!("{} steps written to {}", actions.len(), out.display());
        }
        Cmd::GenData { manifest, desk } => {
            let mut m = match manifest {
                Some(p) => {
                    DatasetManifest::parse(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?
                }
                None => match desk {
                    Body::Manipulator => DatasetManifest::manipulator_desk(),
                    Body::Robot => DatasetManifest::robot_desk(),
                },
            };
            if let Some(s) = cli.seed {
                m.seed = s;
            }
            let summary = gen_dataset(&m, &params, &geom, &out)?;
            println!(
                "{} trials, {} rows in {}",
                summary.steps.len(),
                summary.rows(),
                out.display()
            );
        }
        Cmd::Train {
            net,
            data,
            base,
            epochs,
            lr,
            diffusion_steps,
            no_augment,
        } => {
            let (kind, mut cfg, net_cfg) = match net {
                Net::FE => (
                    ModelKind::Env,
                    TrainConfig::env_reference(),
                    UNetConfig::env_reference().with_base(*base),
                ),
                Net::FR => (
                    ModelKind::Robot,
                    TrainConfig::robot_reference(),
                    UNetConfig::robot_reference().with_base(*base),
                ),
            };
            cfg.rng_seed = cli.seed.unwrap_or(0);
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            if let Some(lr) = lr {
                cfg.learning_rate = *lr;
            }
            let samples = load_samples(data, kind)?;
            let (trained, diffusion) = match kind {
                ModelKind::Env => {
                    let d = DiffusionConfig {
                        num_steps: *diffusion_steps,
                        ..Default::default()
                    };
                    (train_f_e(&samples, &net_cfg, &d, &cfg)?, Some(d))
                }
                ModelKind::Robot => (train_f_r(&samples, &net_cfg, &cfg, !no_augment, &geom)?, None),
            };
            let model = Model {
                kind,
                config: net_cfg,
                params: trained.params,
                diffusion,
            };
            let ckpt = out.join(format!("{}.ckpt", kind.tag()));
            save_model(&model, &ckpt)?;
            let mut loss = create(&out.join(format!("{}_loss.csv", kind.tag())))?;
            trained.curve.write_csv(&mut loss)?;
            loss.flush()?;
            let last = trained.curve.epochs.last().map(|e| e.train).unwrap_or(f64::NAN);
            println!(
                "{} on {} samples: {} epochs, final loss {last:.6}, gradient check {:.2e}, saved {}",
                kind.tag(),
                samples.len(),
                trained.curve.epochs.len(),
                trained.grad_check_error,
                ckpt.display()
            );
        }
        Cmd::Plan { scenario, planner } => {
            let s = load_scenario(scenario, cli.seed)?;
            let p = predictor(planner, &params, geom, s.heightfield.slope_angle(), s.rng_seed)?;
            let trace = execute_policy(env, p.as_ref(), &s, &weights(planner), !planner.no_eaa)?;
            let mut csv = create(&out.join("trace.csv"))?;
            trace.write_csv(&mut csv)?;
            csv.flush()?;
            trace.write_snapshots(&out.join("snapshots"))?;
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
            let line = format!(
                "termination {} steps {} robot_error {} obstacle_error {}",
                trace.termination,
                trace.records.len(),
                opt(trace.robot_error),
                opt(trace.obstacle_error)
            );
            fs::write(out.join("summary.txt"), format!("{line}\n"))?;
            println!("{line}");
        }
        Cmd::Eval {
            scenarios,
            policy,
            planner,
        } => {
            let suite = loco_manipulation_suite(&params, &geom);
            let set: Vec<(usize, Scenario)> = match scenarios {
                Some(dir) => {
                    let mut files: Vec<PathBuf> = fs::read_dir(dir)
                        .with_context(|| format!("listing {}", dir.display()))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                        .collect();
                    files.sort();
                    files
                        .iter()
                        .enumerate()
                        .map(|(i, f)| Ok((i, load_scenario(f, None)?)))
                        .collect::<Result<_>>()?
                }
                None => suite.iter().map(|c| (c.id, c.scenario.clone())).collect(),
            };
            let w = weights(planner);
            let seed = cli.seed.unwrap_or(0);
            let report = match policy {
                PolicyKind::Planner => {
                    let slope = set[0].1.heightfield.slope_angle();
                    let p = predictor(planner, &params, geom, slope, seed)?;
                    evaluate(env, &set, p.as_ref(), &w, !planner.no_eaa)?
                }
                PolicyKind::Random => evaluate_with(env, &set, &w, |id, _| {
                    Box::new(RandomPolicy::new(seed.wrapping_add(id as u64))) as Box<dyn Policy>
                })?,
                PolicyKind::Scripted => {
                    if scenarios.is_some() {
                        bail!("--policy scripted only applies to the built-in suite");
                    }
                    evaluate_with(env, &set, &w, |id, _| {
                        Box::new(ScriptedPolicy(suite[id].script.clone()))
                    })?
                }
            };
            let mut csv = create(&out.join("eval.csv"))?;
            report.write_csv(&mut csv)?;
            csv.flush()?;
            for (id, why) in &report.excluded {
                eprintln!("scenario {id} excluded: {why}");
            }
            println!("{}", report.summary());
        }
        Cmd::Calibrate => {
            let fitted = calibrate_interference(&params, &CalibrationGrid::default())?;
            fs::write(out.join("params.txt"), write_params(&fitted))?;
            println!(
                "obstacle_mobility {} flux_block {} ratios {:?}",
                fitted.obstacle_mobility,
                fitted.flux_block,
                fitted.calibration.as_ref().map(|c| &c.ratios)
            );
        }
        Cmd::Sweep { kind } => match kind {
            SweepKind::Interference => {
                let rows = sweep_interference(&params);
                write_interference(&rows, &out)?;
                println!(
                    "{} ratios written to {}",
                    rows.len(),
                    out.join("interference.csv").display()
                );
            }
            SweepKind::Actions => {
                let stats = sweep_actions(&params, &geom);
                write_actions(&stats, &out)?;
                for s in &stats {
                    println!(
                        "{:<3} dx {:+.3}±{:.3} dy {:+.3}±{:.3} dphi {:+.3}±{:.3}",
                        s.action.tag(),
                        s.mean.0,
                        s.std.0,
                        s.mean.1,
                        s.std.1,
                        s.mean.2,
                        s.std.2
                    );
                }
            }
        },
        Cmd::Render {
            scenario,
            action,
            scale,
        } => {
            let s = load_scenario(scenario, cli.seed)?;
            let img = render_depth(&s.heightfield, Some(&s.robot_start), &s.obstacles, &geom);
            write_depth_pgm(&img, &mut create(&out.join("state.pgm"))?)?;
            depth_preview(&img, *scale).save(out.join("state.png"))?;
            if let Some(a) = action {
                let a: Action = a.parse()?;
                let ai = render_action(&Frame::of(&s.heightfield), &s.robot_start, &geom, a);
                write_action_ppm(&ai, &mut create(&out.join("action.ppm"))?)?;
                action_preview(&ai, *scale).save(out.join("action.png"))?;
            }
            println!("rendered to {}", out.display());
        }
        Cmd::Suite => {
            for c in loco_manipulation_suite(&params, &geom) {
                let script: Vec<&str> = c.script.iter().map(|a| a.tag()).collect();
                let text = format!("# solved by {}\n{}", script.join(","), write_scenario(&c.scenario)?);
                fs::write(out.join(format!("suite_{:02}.txt", c.id)), text)?;
            }
            println!("suite written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
