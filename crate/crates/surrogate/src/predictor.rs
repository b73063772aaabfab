//! One contract for the learned networks and the simulator stand-in.

use std::sync::{Arc, Mutex, OnceLock};

use grain_core::encoding::{
    decode_heightfield, extract_obstacles, extract_robot, render_action, render_depth, robot_term, ActionImage,
    DeltaImage, DepthImage, EncodingError, PixelSet,
};
use grain_core::sim::{robot_kinematics, step_with_cells, Embodiment, SimParams};
use grain_core::terrain::{Action, Heightfield, Obstacle, RobotGeometry, RobotState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{ddpm_sample, noise_schedule, DiffusionConfig, EpsModel, NoiseSchedule};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::train::condition_tensor;
use crate::unet::UNet;
use crate::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Oracle,
    Learned,
}

/// Predicts the environment and robot parts of the next depth image.
/// Implementations are read-only and may be shared across threads.
pub trait Predictor: Sync {
    fn predict_env(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError>;
    fn predict_robot(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError>;
    fn kind(&self) -> PredictorKind;
}

/// Scene decoded from a depth image.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedScene {
    pub robot: RobotState,
    pub robot_pixels: PixelSet,
    pub obstacles: Vec<Obstacle>,
}

/// Decoded images kept by the oracle. A planner asks about the same parent
/// image once per child action and per predictor half.
const DECODE_CACHE: usize = 4;

#[derive(Debug)]
struct DecodedEntry {
    scene: DecodedScene,
    hf: Heightfield,
    /// Summed red and blue coverage of each action's image at the decoded pose.
    templates: OnceLock<Vec<Vec<f64>>>,
}

type Decoded = Arc<DecodedEntry>;

/// Ground truth from the simulator, reached through image decoding.
#[derive(Debug)]
pub struct OraclePredictor {
    pub params: SimParams,
    pub geom: RobotGeometry,
    pub embodiment: Embodiment,
    /// Tank tilt, which the depth image does not carry.
    pub slope_angle: f64,
    cache: Mutex<Vec<(Vec<f64>, Decoded)>>,
}

impl Clone for OraclePredictor {
    fn clone(&self) -> Self {
        Self::new(self.params.clone(), self.geom, self.embodiment, self.slope_angle)
    }
}

impl OraclePredictor {
    pub fn new(params: SimParams, geom: RobotGeometry, embodiment: Embodiment, slope_angle: f64) -> Self {
        Self {
            params,
            geom,
            embodiment,
            slope_angle,
            cache: Mutex::new(Vec::new()),
        }
    }

    pub fn decode(&self, img: &DepthImage) -> Result<DecodedScene, SurrogateError> {
        let (robot, robot_pixels) = extract_robot(img, &self.geom)?;
        let obstacles = extract_obstacles(img, &robot_pixels);
        Ok(DecodedScene {
            robot,
            robot_pixels,
            obstacles,
        })
    }

    /// Scene and bed behind `img`, from the cache when the same image was
    /// decoded recently. Cached and fresh results are identical.
    fn decoded(&self, img: &DepthImage) -> Result<Decoded, SurrogateError> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(pos) = cache.iter().position(|(v, _)| v.as_slice() == img.values()) {
            let hit = cache.remove(pos);
            let out = hit.1.clone();
            cache.insert(0, hit);
            return Ok(out);
        }
        let scene = self.decode(img)?;
        let hf = decode_heightfield(img, Some(&scene.robot), &scene.obstacles, &self.geom, self.slope_angle)?;
        let out = Arc::new(DecodedEntry {
            scene,
            hf,
            templates: OnceLock::new(),
        });
        cache.insert(0, (img.values().to_vec(), out.clone()));
        cache.truncate(DECODE_CACHE);
        Ok(out)
    }

    /// The action whose image at `robot` is closest to `action` in summed
    /// absolute coverage difference; ties go to the earlier action.
    pub fn classify_action(&self, action: &ActionImage, robot: &RobotState) -> Action {
        closest_action(action, &self.templates(action, robot))
    }

    fn templates(&self, action: &ActionImage, robot: &RobotState) -> Vec<Vec<f64>> {
        Action::ALL
            .iter()
            .map(|&a| {
                render_action(&action.frame(), robot, &self.geom, a)
                    .pixels()
                    .iter()
                    .map(|p| p[0] + p[2])
                    .collect()
            })
            .collect()
    }
}

/// Index into `templates` (ordered as [`Action::ALL`]) with the smallest
/// summed absolute coverage difference; ties go to the earlier action.
fn closest_action(action: &ActionImage, templates: &[Vec<f64>]) -> Action {
    let mut best = (f64::INFINITY, Action::ALL[0]);
    for (a, t) in Action::ALL.into_iter().zip(templates) {
        let d: f64 = action
            .pixels()
            .iter()
            .zip(t)
            .map(|(p, g)| (p[0] + p[2] - g).abs())
            .sum();
        if d < best.0 {
            best = (d, a);
        }
    }
    best.1
}

impl Predictor for OraclePredictor {
    /// Steps the decoded scene with the painted cells and renders the result
    /// without the robot. The delta is zero on the current robot pixels.
    fn predict_env(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError> {
        let decoded = self.decoded(img)?;
        let (scene, hf) = (&decoded.scene, &decoded.hf);
        let step = step_with_cells(hf, &scene.obstacles, &action.coverage(), &self.params);
        let next = render_depth(&step.next_heightfield, None, &step.next_obstacles, &self.geom);
        let delta = DeltaImage::between(img, &next)?;
        Ok(delta.masked(|i| !scene.robot_pixels.contains(i)))
    }

    /// Moves the body by the noise-free kinematics of the recognised action
    /// and returns the change over the old and new body footprints.
    fn predict_robot(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError> {
        if self.embodiment == Embodiment::Manipulator {
            return Ok(DeltaImage::zeros(img.frame()));
        }
        let decoded = self.decoded(img)?;
        let (scene, hf) = (&decoded.scene, &decoded.hf);
        let templates = decoded.templates.get_or_init(|| self.templates(action, &scene.robot));
        let a = closest_action(action, templates);
        let moved = robot_kinematics::<ChaCha8Rng>(&scene.robot, a, &self.params.action_table, None);
        let frame = img.frame();
        let bounds = grain_core::terrain::Bounds {
            width: frame.width as f64 * frame.cell,
            height: frame.height as f64 * frame.cell,
        };
        let (x, y, _) = bounds.clamp(moved.x, moved.y);
        let next = RobotState { x, y, phi: moved.phi };
        let rendered = render_depth(hf, Some(&next), &scene.obstacles, &self.geom);
        let mut region = vec![false; frame.len()];
        for (i, _) in robot_term(&frame, &scene.robot, &self.geom)
            .into_iter()
            .chain(robot_term(&frame, &next, &self.geom))
        {
            region[i] = true;
        }
        Ok(DeltaImage::between(img, &rendered)?.masked(|i| region[i]))
    }

    fn kind(&self) -> PredictorKind {
        PredictorKind::Oracle
    }
}

/// Environment net with its condition channels fixed for one query.
struct Conditioned<'a> {
    net: &'a UNet,
    params: &'a ParamStore,
    cond: Tensor,
}

impl EpsModel for Conditioned<'_> {
    fn eps(&self, x_t: &Tensor, t: usize) -> Result<Tensor, SurrogateError> {
        let input = Tensor::concat_channels(&[x_t, &self.cond]);
        self.net.infer(self.params, input, Some(t))
    }
}

/// Draws an environment delta by ancestral sampling, re-appending the depth
/// and action channels at every step. The result is clamped to `[-2, 2]`.
pub fn sample_f_e(
    net: &UNet,
    params: &ParamStore,
    img: &DepthImage,
    action: &ActionImage,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<DeltaImage, SurrogateError> {
    let model = Conditioned {
        net,
        params,
        cond: condition_tensor(img, action)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = ddpm_sample(&model, &[1, img.height(), img.width()], schedule, &mut rng)?;
    Ok(DeltaImage::from_clamped(img.frame(), x.into_data()))
}

/// Single forward pass of the robot net, clamped to `[-2, 2]`.
pub fn infer_f_r(
    net: &UNet,
    params: &ParamStore,
    img: &DepthImage,
    action: &ActionImage,
) -> Result<DeltaImage, SurrogateError> {
    let y = net.infer(params, condition_tensor(img, action)?, None)?;
    Ok(DeltaImage::from_clamped(img.frame(), y.into_data()))
}

/// FNV-1a over the bit patterns of both images, so every query draws its own
/// reproducible noise.
fn query_hash(img: &DepthImage, action: &ActionImage) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bits = img
        .values()
        .iter()
        .map(|v| v.to_bits())
        .chain(action.pixels().iter().flat_map(|p| p.iter().map(|v| v.to_bits())));
    for b in bits {
        for byte in b.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Trained networks behind the predictor contract.
#[derive(Debug, Clone)]
pub struct LearnedPredictor {
    pub env_net: UNet,
    pub env_params: ParamStore,
    pub robot_net: Option<(UNet, ParamStore)>,
    pub schedule: NoiseSchedule,
    pub seed: u64,
    pub embodiment: Embodiment,
}

impl LearnedPredictor {
    pub fn new(
        env: (UNet, ParamStore),
        robot: Option<(UNet, ParamStore)>,
        diffusion: &DiffusionConfig,
        seed: u64,
        embodiment: Embodiment,
    ) -> Result<Self, SurrogateError> {
        env.0.check_store(&env.1)?;
        if let Some((n, p)) = &robot {
            n.check_store(p)?;
        }
        if embodiment == Embodiment::Robot && robot.is_none() {
            return Err(SurrogateError::Config("robot embodiment needs a robot net".into()));
        }
        Ok(Self {
            env_net: env.0,
            env_params: env.1,
            robot_net: robot,
            schedule: noise_schedule(diffusion)?,
            seed,
            embodiment,
        })
    }
}

impl Predictor for LearnedPredictor {
    fn predict_env(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError> {
        let seed = self.seed ^ query_hash(img, action);
        sample_f_e(&self.env_net, &self.env_params, img, action, &self.schedule, seed)
    }

    fn predict_robot(&self, img: &DepthImage, action: &ActionImage) -> Result<DeltaImage, SurrogateError> {
        match (&self.robot_net, self.embodiment) {
            (Some((net, params)), Embodiment::Robot) => infer_f_r(net, params, img, action),
            _ => Ok(DeltaImage::zeros(img.frame())),
        }
    }

    fn kind(&self) -> PredictorKind {
        PredictorKind::Learned
    }
}

impl From<EncodingError> for SurrogateError {
    fn from(e: EncodingError) -> Self {
        SurrogateError::Encoding(e.to_string())
    }
}
