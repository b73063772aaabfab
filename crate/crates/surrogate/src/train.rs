//! Training loops for the environment and robot predictors.
//!
//! The environment net learns to predict the noise added to a delta image,
//! conditioned on the depth and action images stacked as extra channels. The
//! robot net regresses the robot delta directly. Both use AdamW with batch
//! gradients averaged over `batch_size` samples, hold out the last
//! `val_fraction` of the data, and stop early once the held-out loss has not
//! improved for `patience` epochs, keeping the best weights.

use std::io::Write;

use grain_core::encoding::{paste_obstacle_augment, ActionImage, DeltaImage, DepthImage};
use grain_core::terrain::RobotGeometry;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{noise_schedule, q_sample, DiffusionConfig, NoiseSchedule};
use crate::gradcheck::micro_check;
use crate::graph::Graph;
use crate::optim::AdamW;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::unet::{UNet, UNetConfig};
use crate::SurrogateError;

/// Largest finite-difference error tolerated before training starts.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    AdamW,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    /// Share of samples held out for validation, taken from the end.
    pub val_fraction: f64,
    /// Epochs without held-out improvement before stopping.
    pub patience: Option<usize>,
}

impl TrainConfig {
    /// Reference environment-predictor settings.
    pub fn env_reference() -> Self {
        Self {
            optimizer: Optimizer::AdamW,
            learning_rate: 1e-5,
            weight_decay: 1e-5,
            batch_size: 1,
            epochs: 50,
            rng_seed: 0,
            val_fraction: 0.1,
            patience: Some(5),
        }
    }

    /// Reference robot-predictor settings.
    pub fn robot_reference() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            ..Self::env_reference()
        }
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.weight_decay < 0.0 {
            return Err(SurrogateError::Config(
                "learning rate must be > 0, batch size >= 1 and weight decay >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(SurrogateError::Config("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One recorded transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub depth: DepthImage,
    pub action: ActionImage,
    /// Environment delta for the environment net, robot delta for the robot net.
    pub target: DeltaImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    /// `epoch,train_loss,val_loss`; a missing validation loss is left empty.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            match e.val {
                Some(v) => writeln!(out, "{},{:.9},{:.9}", e.epoch, e.train, v)?,
                None => writeln!(out, "{},{:.9},", e.epoch, e.train)?,
            }
        }
        Ok(())
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: ParamStore,
    pub curve: LossCurve,
    /// Worst relative error of the pre-training gradient check.
    pub grad_check_error: f64,
}

/// `[depth, action r, g, b]` as a 4-channel tensor.
pub fn condition_tensor(depth: &DepthImage, action: &ActionImage) -> Result<Tensor, SurrogateError> {
    let (w, h) = (depth.width(), depth.height());
    if (action.width(), action.height()) != (w, h) {
        return Err(SurrogateError::Shape("depth and action sizes differ".into()));
    }
    let [r, g, b] = action.planes();
    let mut data = depth.values().to_vec();
    data.extend(r);
    data.extend(g);
    data.extend(b);
    Ok(Tensor::new(&[4, h, w], data))
}

pub fn delta_tensor(d: &DeltaImage) -> Tensor {
    Tensor::new(&[1, d.height(), d.width()], d.values().to_vec())
}

/// Robot-net input and label for one sample. With `augment`, obstacles are
/// pasted into the depth channel; the label is always the stored delta.
pub fn robot_pair<R: Rng + ?Sized>(
    s: &Sample,
    augment: bool,
    geom: &RobotGeometry,
    rng: &mut R,
) -> Result<(Tensor, Tensor), SurrogateError> {
    let depth = if augment {
        paste_obstacle_augment(&s.depth, geom, rng).image
    } else {
        s.depth.clone()
    };
    Ok((condition_tensor(&depth, &s.action)?, delta_tensor(&s.target)))
}

fn split(data: &[Sample], frac: f64) -> (&[Sample], &[Sample]) {
    let n_val = ((data.len() as f64) * frac).floor() as usize;
    let n_val = n_val.min(data.len().saturating_sub(1));
    data.split_at(data.len() - n_val)
}

/// Per-sample loss and, when `train` is set, gradients.
type StepFn<'a> =
    dyn FnMut(&ParamStore, &Sample, &mut ChaCha8Rng, bool) -> Result<(f64, Vec<Option<Tensor>>), SurrogateError> + 'a;

fn run_training(
    net: &UNet,
    data: &[Sample],
    cfg: &TrainConfig,
    grad_check_error: f64,
    step: &mut StepFn<'_>,
) -> Result<Trained, SurrogateError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(SurrogateError::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = net.init(&mut rng);
    let mut opt = AdamW::new(&params, cfg.learning_rate, cfg.weight_decay);
    let (train, val) = split(data, cfg.val_fraction);
    let mut curve = LossCurve::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Option<Tensor>> = vec![None; params.len()];
            for &i in batch {
                let (l, g) = step(&params, &train[i], &mut rng, true)?;
                if !l.is_finite() {
                    return Err(SurrogateError::NonFinite(format!(
                        "loss {l} at epoch {epoch}, sample {i}"
                    )));
                }
                total += l;
                for (a, gi) in acc.iter_mut().zip(g) {
                    match (a.as_mut(), gi) {
                        (Some(a), Some(gi)) => a.add_assign(&gi),
                        (None, Some(gi)) => *a = Some(gi),
                        _ => {}
                    }
                }
            }
            for g in acc.iter_mut().flatten() {
                g.scale(1.0 / batch.len() as f64);
            }
            opt.step(&mut params, &acc);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            // fixed noise so successive epochs are comparable
            let mut vr = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x7a1d);
            let mut sum = 0.0;
            for s in val {
                sum += step(&params, s, &mut vr, false)?.0;
            }
            Some(sum / val.len() as f64)
        };
        curve.epochs.push(EpochLoss {
            epoch,
            train: train_loss,
            val: val_loss,
        });
        if let (Some(v), Some(patience)) = (val_loss, cfg.patience) {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    let params = best.map_or(params, |b| b.1);
    Ok(Trained {
        params,
        curve,
        grad_check_error,
    })
}

fn checked_gradients(in_channels: usize, with_time: bool, seed: u64) -> Result<f64, SurrogateError> {
    let gc = micro_check(in_channels, with_time, seed)?;
    if gc.max_rel_error >= GRAD_CHECK_TOLERANCE {
        return Err(SurrogateError::GradientCheck {
            block: gc.worst_block,
            error: gc.max_rel_error,
        });
    }
    Ok(gc.max_rel_error)
}

/// Noise-prediction loss for one sample at a random step.
fn env_loss(
    net: &UNet,
    sched: &NoiseSchedule,
    params: &ParamStore,
    s: &Sample,
    rng: &mut ChaCha8Rng,
    grads: bool,
) -> Result<(f64, Vec<Option<Tensor>>), SurrogateError> {
    let t = rng.gen_range(0..sched.len());
    let x0 = delta_tensor(&s.target);
    let eps = Tensor::randn(x0.dims(), rng);
    let xt = q_sample(&x0, t, &eps, sched);
    let input = Tensor::concat_channels(&[&xt, &condition_tensor(&s.depth, &s.action)?]);
    let mut g = Graph::new();
    let x = g.input(input);
    let y = if grads {
        net.forward(&mut g, params, x, Some(t), Some(rng))?
    } else {
        net.forward(&mut g, params, x, Some(t), None)?
    };
    let l = g.mse(y, eps);
    let value = g.value(l).data()[0];
    Ok((value, if grads { g.backward(l, params.len()) } else { Vec::new() }))
}

pub fn train_f_e(
    data: &[Sample],
    net_cfg: &UNetConfig,
    diff_cfg: &DiffusionConfig,
    cfg: &TrainConfig,
) -> Result<Trained, SurrogateError> {
    if net_cfg.in_channels != 5 || net_cfg.out_channels != 1 || net_cfg.time_embed_dim.is_none() {
        return Err(SurrogateError::Config(
            "environment net needs 5 input channels, 1 output and a time embedding".into(),
        ));
    }
    if let Some(s) = data.first() {
        net_cfg.validate(s.depth.height(), s.depth.width())?;
    }
    let err = checked_gradients(net_cfg.in_channels, true, cfg.rng_seed)?;
    let sched = noise_schedule(diff_cfg)?;
    let net = UNet::new(net_cfg.clone());
    let mut step =
        |p: &ParamStore, s: &Sample, rng: &mut ChaCha8Rng, grads: bool| env_loss(&net, &sched, p, s, rng, grads);
    run_training(&net, data, cfg, err, &mut step)
}

pub fn train_f_r(
    data: &[Sample],
    net_cfg: &UNetConfig,
    cfg: &TrainConfig,
    augment: bool,
    geom: &RobotGeometry,
) -> Result<Trained, SurrogateError> {
    if net_cfg.in_channels != 4 || net_cfg.out_channels != 1 || net_cfg.time_embed_dim.is_some() {
        return Err(SurrogateError::Config(
            "robot net needs 4 input channels, 1 output and no time embedding".into(),
        ));
    }
    if let Some(s) = data.first() {
        net_cfg.validate(s.depth.height(), s.depth.width())?;
    }
    let err = checked_gradients(net_cfg.in_channels, false, cfg.rng_seed)?;
    let net = UNet::new(net_cfg.clone());
    let mut step = |p: &ParamStore, s: &Sample, rng: &mut ChaCha8Rng, grads: bool| {
        let (input, label) = robot_pair(s, augment && grads, geom, rng)?;
        let mut g = Graph::new();
        let x = g.input(input);
        let y = if grads {
            net.forward(&mut g, p, x, None, Some(rng))?
        } else {
            net.forward(&mut g, p, x, None, None)?
        };
        let l = g.mse(y, label);
        let value = g.value(l).data()[0];
        Ok((value, if grads { g.backward(l, p.len()) } else { Vec::new() }))
    };
    run_training(&net, data, cfg, err, &mut step)
}
