//! Encoder-decoder with skip connections and residual blocks.
//!
//! Per level the encoder runs `res_blocks_per_level` residual blocks at
//! `base_channels * multiplier` channels, keeps the result as a skip, and
//! halves the resolution by 2×2 mean pooling (except at the last level). A
//! middle block follows. The decoder walks the levels back, concatenating the
//! matching skip before its residual blocks and upsampling by nearest
//! neighbour in between.
//!
//! A residual block is `norm -> relu -> conv3 -> (+ time) -> norm -> relu ->
//! dropout -> conv3` plus the input, through a 1×1 convolution when the width
//! changes. Normalisation is per channel group. The second convolution of
//! every block and the output convolution start at zero.

use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetConfig {
    pub base_channels: usize,
    pub channel_multipliers: Vec<usize>,
    pub res_blocks_per_level: usize,
    pub dropout: f64,
    /// Sinusoidal time embedding width; `None` builds an unconditioned net.
    pub time_embed_dim: Option<usize>,
    pub activation: Activation,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl UNetConfig {
    /// Environment predictor at the reference size: noisy delta, depth and
    /// three action planes in, predicted noise out.
    pub fn env_reference() -> Self {
        Self {
            base_channels: 64,
            channel_multipliers: vec![1, 2, 4, 8, 16],
            res_blocks_per_level: 2,
            dropout: 0.1,
            time_embed_dim: Some(32),
            activation: Activation::Relu,
            in_channels: 5,
            out_channels: 1,
        }
    }

    /// Robot predictor at the reference size: depth and action in, robot
    /// delta out.
    pub fn robot_reference() -> Self {
        Self {
            base_channels: 64,
            channel_multipliers: vec![1, 2, 4, 8],
            res_blocks_per_level: 2,
            dropout: 0.1,
            time_embed_dim: None,
            activation: Activation::Relu,
            in_channels: 4,
            out_channels: 1,
        }
    }

    /// Same topology with a different base width, for single-core training.
    pub fn with_base(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn levels(&self) -> usize {
        self.channel_multipliers.len()
    }

    /// Resolution of the deepest level for an `h × w` input.
    pub fn bottleneck(&self, h: usize, w: usize) -> (usize, usize) {
        let f = 1 << (self.levels() - 1);
        (h / f, w / f)
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<(), SurrogateError> {
        if self.channel_multipliers.is_empty() || self.channel_multipliers.contains(&0) {
            return Err(SurrogateError::Config(
                "channel multipliers must be nonempty and positive".into(),
            ));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(SurrogateError::Config("channel counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SurrogateError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if let Some(d) = self.time_embed_dim {
            if d == 0 || d % 2 == 1 {
                return Err(SurrogateError::Config(format!("time embedding width {d} must be even")));
            }
        }
        let f = 1 << (self.levels() - 1);
        if !h.is_multiple_of(f) || !w.is_multiple_of(f) || h == 0 || w == 0 {
            return Err(SurrogateError::Config(format!(
                "{h}×{w} input is not divisible by {f} for {} levels",
                self.levels()
            )));
        }
        Ok(())
    }

    /// One-line `key=value` rendering stored in checkpoints.
    pub fn echo(&self) -> String {
        let mults: Vec<String> = self.channel_multipliers.iter().map(|m| m.to_string()).collect();
        format!(
            "base={} mult={} res={} dropout={} temb={} act=relu in={} out={}",
            self.base_channels,
            mults.join(","),
            self.res_blocks_per_level,
            self.dropout,
            self.time_embed_dim.map_or("none".to_string(), |d| d.to_string()),
            self.in_channels,
            self.out_channels
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// He-uniform with the given fan-in.
    He(usize),
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    init: Init,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: usize,
    beta: usize,
    groups: usize,
}

/// Largest of 8, 4, 2, 1 dividing `c`.
pub fn norm_groups(c: usize) -> usize {
    [8, 4, 2, 1].into_iter().find(|g| c.is_multiple_of(*g)).unwrap_or(1)
}

#[derive(Debug, Clone)]
struct ResBlock {
    norm1: Norm,
    conv1: Layer,
    norm2: Norm,
    time: Option<Layer>,
    conv2: Layer,
    skip: Option<Layer>,
}

#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    specs: Vec<ParamSpec>,
    conv_in: Layer,
    time_mlp: Option<Layer>,
    down: Vec<Vec<ResBlock>>,
    mid: ResBlock,
    up: Vec<Vec<ResBlock>>,
    norm_out: Norm,
    conv_out: Layer,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, dims: Vec<usize>, init: Init) -> usize {
        self.specs.push(ParamSpec { name, dims, init });
        self.specs.len() - 1
    }

    fn conv(&mut self, name: &str, ci: usize, co: usize, k: usize, zero: bool) -> Layer {
        let init = if zero { Init::Zero } else { Init::He(ci * k * k) };
        Layer {
            w: self.add(format!("{name}.w"), vec![co, ci, k, k], init),
            b: self.add(format!("{name}.b"), vec![co], Init::Zero),
        }
    }

    fn norm(&mut self, name: &str, c: usize) -> Norm {
        Norm {
            gamma: self.add(format!("{name}.gamma"), vec![c], Init::One),
            beta: self.add(format!("{name}.beta"), vec![c], Init::Zero),
            groups: norm_groups(c),
        }
    }

    fn linear(&mut self, name: &str, n_in: usize, n_out: usize) -> Layer {
        Layer {
            w: self.add(format!("{name}.w"), vec![n_out, n_in], Init::He(n_in)),
            b: self.add(format!("{name}.b"), vec![n_out], Init::Zero),
        }
    }

    fn res(&mut self, name: &str, ci: usize, co: usize, temb: Option<usize>) -> ResBlock {
        ResBlock {
            norm1: self.norm(&format!("{name}.norm1"), ci),
            conv1: self.conv(&format!("{name}.conv1"), ci, co, 3, false),
            time: temb.map(|d| self.linear(&format!("{name}.time"), d, co)),
            norm2: self.norm(&format!("{name}.norm2"), co),
            conv2: self.conv(&format!("{name}.conv2"), co, co, 3, true),
            skip: (ci != co).then(|| self.conv(&format!("{name}.skip"), ci, co, 1, false)),
        }
    }
}

/// Sinusoidal embedding of a diffusion step.
pub fn time_embedding(t: usize, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut v = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        v[i] = (t as f64 * freq).sin();
        v[i + half] = (t as f64 * freq).cos();
    }
    Tensor::new(&[dim], v)
}

impl UNet {
    pub fn new(cfg: UNetConfig) -> Self {
        let mut b = Builder { specs: Vec::new() };
        let temb = cfg.time_embed_dim;
        let ch: Vec<usize> = cfg.channel_multipliers.iter().map(|m| m * cfg.base_channels).collect();
        let conv_in = b.conv("in", cfg.in_channels, ch[0], 3, false);
        let time_mlp = temb.map(|d| b.linear("time", d, d));
        let mut down = Vec::new();
        let mut c = ch[0];
        for (lvl, &co) in ch.iter().enumerate() {
            let blocks = (0..cfg.res_blocks_per_level)
                .map(|r| {
                    let blk = b.res(&format!("down{lvl}.{r}"), c, co, temb);
                    c = co;
                    blk
                })
                .collect();
            down.push(blocks);
        }
        let mid = b.res("mid", c, c, temb);
        let mut up = vec![Vec::new(); ch.len()];
        for lvl in (0..ch.len()).rev() {
            let co = ch[lvl];
            let mut blocks = Vec::new();
            for r in 0..cfg.res_blocks_per_level.max(1) {
                let ci = if r == 0 { c + co } else { co };
                blocks.push(b.res(&format!("up{lvl}.{r}"), ci, co, temb));
                c = co;
            }
            up[lvl] = blocks;
        }
        let norm_out = b.norm("out.norm", ch[0]);
        let conv_out = b.conv("out", ch[0], cfg.out_channels, 3, true);
        Self {
            cfg,
            specs: b.specs,
            conv_in,
            time_mlp,
            down,
            mid,
            up,
            norm_out,
            conv_out,
        }
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Parameter count without allocating the weights.
    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.dims.iter().product::<usize>()).sum()
    }

    /// Fresh weights: He-uniform convolutions and linears, zero biases, zero
    /// final layers.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::new();
        for s in &self.specs {
            let t = match s.init {
                Init::Zero => Tensor::zeros(&s.dims),
                Init::One => Tensor::full(&s.dims, 1.0),
                Init::He(fan_in) => Tensor::uniform(&s.dims, (6.0 / fan_in as f64).sqrt(), rng),
            };
            store.push(s.name.clone(), t);
        }
        store
    }

    /// Checks that `store` was produced for this layout.
    pub fn check_store(&self, store: &ParamStore) -> Result<(), SurrogateError> {
        let ok = store.len() == self.specs.len()
            && self
                .specs
                .iter()
                .enumerate()
                .all(|(i, s)| store.name(i) == s.name && store.get(i).dims() == s.dims.as_slice());
        if ok {
            Ok(())
        } else {
            Err(SurrogateError::Config(
                "parameters do not match the network layout".into(),
            ))
        }
    }

    /// Records a forward pass on `x` (`[in_channels, h, w]`). Dropout is
    /// active only when `dropout_rng` is given.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        t: Option<usize>,
        mut dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var, SurrogateError> {
        let (c, h, w) = g.value(x).chw();
        if c != self.cfg.in_channels {
            return Err(SurrogateError::Shape(format!(
                "network takes {} channels, got {c}",
                self.cfg.in_channels
            )));
        }
        self.cfg
            .validate(h, w)
            .map_err(|e| SurrogateError::Shape(e.to_string()))?;
        let temb = match (self.time_mlp, t) {
            (Some(mlp), Some(t)) => {
                let d = self.cfg.time_embed_dim.unwrap_or_default();
                let e = g.input(time_embedding(t, d));
                let y = linear(g, store, mlp, e);
                Some(g.relu(y))
            }
            (None, None) => None,
            (Some(_), None) => return Err(SurrogateError::Shape("time step required".into())),
            (None, Some(_)) => return Err(SurrogateError::Shape("network has no time input".into())),
        };
        let p = self.cfg.dropout;
        macro_rules! run {
            ($g:expr, $blk:expr, $x:expr) => {
                res_block($g, store, $blk, $x, temb, p, dropout_rng.as_deref_mut())
            };
        }

        let mut hcur = conv(g, store, self.conv_in, x);
        let mut skips = Vec::new();
        for (lvl, blocks) in self.down.iter().enumerate() {
            for blk in blocks {
                hcur = run!(g, blk, hcur);
            }
            skips.push(hcur);
            if lvl + 1 < self.down.len() {
                hcur = g.avg_pool(hcur);
            }
        }
        hcur = run!(g, &self.mid, hcur);
        for lvl in (0..self.up.len()).rev() {
            hcur = g.concat(hcur, skips[lvl]);
            for blk in &self.up[lvl] {
                hcur = run!(g, blk, hcur);
            }
            if lvl > 0 {
                hcur = g.upsample(hcur);
            }
        }
        let n = norm(g, store, self.norm_out, hcur);
        let a = g.relu(n);
        Ok(conv(g, store, self.conv_out, a))
    }

    /// Forward pass without dropout, returning the output tensor.
    pub fn infer(&self, store: &ParamStore, x: Tensor, t: Option<usize>) -> Result<Tensor, SurrogateError> {
        let mut g = Graph::new();
        let xv = g.input(x);
        let y = self.forward(&mut g, store, xv, t, None)?;
        Ok(g.value(y).clone())
    }
}

fn param(g: &mut Graph, store: &ParamStore, slot: usize) -> Var {
    g.param(slot, store.get(slot).clone())
}

fn conv(g: &mut Graph, store: &ParamStore, l: Layer, x: Var) -> Var {
    let w = param(g, store, l.w);
    let b = param(g, store, l.b);
    g.conv(x, w, b)
}

fn norm(g: &mut Graph, store: &ParamStore, n: Norm, x: Var) -> Var {
    let gamma = param(g, store, n.gamma);
    let beta = param(g, store, n.beta);
    g.group_norm(x, gamma, beta, n.groups)
}

fn linear(g: &mut Graph, store: &ParamStore, l: Layer, x: Var) -> Var {
    let w = param(g, store, l.w);
    let b = param(g, store, l.b);
    g.linear(x, w, b)
}

fn res_block(
    g: &mut Graph,
    store: &ParamStore,
    blk: &ResBlock,
    x: Var,
    temb: Option<Var>,
    p: f64,
    rng: Option<&mut (dyn rand::RngCore + '_)>,
) -> Var {
    let n = norm(g, store, blk.norm1, x);
    let a = g.relu(n);
    let mut h = conv(g, store, blk.conv1, a);
    if let (Some(l), Some(e)) = (blk.time, temb) {
        let v = linear(g, store, l, e);
        h = g.add_channel(h, v);
    }
    h = norm(g, store, blk.norm2, h);
    h = g.relu(h);
    if let Some(rng) = rng {
        if p > 0.0 {
            h = g.dropout(h, p, rng);
        }
    }
    h = conv(g, store, blk.conv2, h);
    let skip = match blk.skip {
        Some(l) => conv(g, store, l, x),
        None => x,
    };
    g.add(h, skip)
}
