//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::unet::{Activation, UNet, UNetConfig};
use crate::SurrogateError;

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;

/// Gradients smaller than this in both estimates are compared absolutely.
const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest relative error over every scalar parameter.
    pub max_rel_error: f64,
    /// Parameter block holding that worst scalar.
    pub worst_block: String,
    pub checked: usize,
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ABS_FLOOR {
        (analytic - numeric).abs() / ABS_FLOOR
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Differentiates `mse(net(x, t), target)` with every parameter perturbed in
/// turn. Dropout, if configured, draws the same mask on every evaluation.
pub fn check_network(
    net: &UNet,
    store: &ParamStore,
    x: &Tensor,
    t: Option<usize>,
    target: &Tensor,
) -> Result<GradCheck, SurrogateError> {
    let mask_seed = 0x5eed;
    let loss = |s: &ParamStore, grads: bool| -> Result<(f64, Vec<Option<Tensor>>), SurrogateError> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
        let y = net.forward(&mut g, s, xv, t, Some(&mut rng))?;
        let l = g.mse(y, target.clone());
        let value = g.value(l).data()[0];
        let gr = if grads { g.backward(l, s.len()) } else { Vec::new() };
        Ok((value, gr))
    };
    let (_, analytic) = loss(store, true)?;
    let mut probe = store.clone();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    #[allow(clippy::needless_range_loop)]
    for slot in 0..store.len() {
        for k in 0..store.get(slot).len() {
            let orig = store.get(slot).data()[k];
            probe.get_mut(slot).data_mut()[k] = orig + FD_STEP;
            let (up, _) = loss(&probe, false)?;
            probe.get_mut(slot).data_mut()[k] = orig - FD_STEP;
            let (down, _) = loss(&probe, false)?;
            probe.get_mut(slot).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[slot].as_ref().map_or(0.0, |g| g.data()[k]);
            let e = rel_error(a, numeric);
            checked += 1;
            if e > worst.0 {
                worst = (e, store.name(slot).to_string());
            }
        }
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst_block: worst.1,
        checked,
    })
}

/// The 4×4 micro-model used before training: two levels, a width change, a
/// time embedding when `with_time`, and dropout. Every weight is drawn away
/// from zero so no block hides behind a zero-initialised layer.
pub fn micro_check(in_channels: usize, with_time: bool, seed: u64) -> Result<GradCheck, SurrogateError> {
    let cfg = UNetConfig {
        base_channels: 2,
        channel_multipliers: vec![1, 2],
        res_blocks_per_level: 1,
        dropout: 0.1,
        time_embed_dim: with_time.then_some(4),
        activation: Activation::Relu,
        in_channels,
        out_channels: 1,
    };
    let net = UNet::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = net.init(&mut rng);
    for t in store.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(0.2..0.8) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
    }
    let x = Tensor::randn(&[in_channels, 4, 4], &mut rng);
    let target = Tensor::randn(&[1, 4, 4], &mut rng);
    check_network(&net, &store, &x, with_time.then_some(7), &target)
}
