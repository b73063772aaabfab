//! Linear-schedule DDPM: forward noising and ancestral sampling with an
//! epsilon-predicting model.

use rand::Rng;

use crate::tensor::Tensor;
use crate::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaSchedule {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Ddpm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionConfig {
    pub num_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub schedule: BetaSchedule,
    pub sampler: Sampler,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            num_steps: 150,
            beta_start: 1e-4,
            beta_end: 0.025,
            schedule: BetaSchedule::Linear,
            sampler: Sampler::Ddpm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Variance of the ancestral step into `t - 1`; zero at `t = 0`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.betas[t] * (1.0 - self.alphas_bar[t - 1]) / (1.0 - self.alphas_bar[t])
    }
}

pub fn noise_schedule(cfg: &DiffusionConfig) -> Result<NoiseSchedule, SurrogateError> {
    if !(0.0 < cfg.beta_start && cfg.beta_start < cfg.beta_end && cfg.beta_end < 1.0) {
        return Err(SurrogateError::Config(format!(
            "beta range {}..{} must satisfy 0 < start < end < 1",
            cfg.beta_start, cfg.beta_end
        )));
    }
    if cfg.num_steps < 2 {
        return Err(SurrogateError::Config("need at least two diffusion steps".into()));
    }
    let n = cfg.num_steps;
    let betas: Vec<f64> = (0..n)
        .map(|t| cfg.beta_start + (cfg.beta_end - cfg.beta_start) * t as f64 / (n - 1) as f64)
        .collect();
    let mut alphas_bar = Vec::with_capacity(n);
    let mut acc = 1.0;
    for b in &betas {
        acc *= 1.0 - b;
        alphas_bar.push(acc);
    }
    Ok(NoiseSchedule { betas, alphas_bar })
}

/// `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn q_sample(x0: &Tensor, t: usize, eps: &Tensor, s: &NoiseSchedule) -> Tensor {
    assert_eq!(x0.dims(), eps.dims());
    let (a, b) = (s.alphas_bar[t].sqrt(), (1.0 - s.alphas_bar[t]).sqrt());
    Tensor::new(
        x0.dims(),
        x0.data().iter().zip(eps.data()).map(|(x, e)| a * x + b * e).collect(),
    )
}

/// Anything that predicts the noise in `x_t`.
pub trait EpsModel {
    fn eps(&self, x_t: &Tensor, t: usize) -> Result<Tensor, SurrogateError>;
}

/// Ancestral sampling from standard normal noise down to `t = 0`, using the
/// posterior variance for every stochastic step.
pub fn ddpm_sample<M: EpsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    dims: &[usize],
    s: &NoiseSchedule,
    rng: &mut R,
) -> Result<Tensor, SurrogateError> {
    let mut x = Tensor::randn(dims, rng);
    for t in (0..s.len()).rev() {
        let eps = model.eps(&x, t)?;
        let beta = s.betas[t];
        let k = beta / (1.0 - s.alphas_bar[t]).sqrt();
        let inv = 1.0 / (1.0 - beta).sqrt();
        let sd = s.posterior_variance(t).sqrt();
        let noise = if t > 0 { Some(Tensor::randn(dims, rng)) } else { None };
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let mut m = inv * (*v - k * eps.data()[i]);
            if let Some(z) = &noise {
                m += sd * z.data()[i];
            }
            *v = m;
        }
        if x.data().iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite(format!("sampler diverged at step {t}")));
        }
    }
    Ok(x)
}

/// Exact noise predictor for data drawn i.i.d. from `N(mu, sigma^2)`.
#[derive(Debug, Clone)]
pub struct GaussianEps {
    pub mu: f64,
    pub sigma: f64,
    pub schedule: NoiseSchedule,
}

impl EpsModel for GaussianEps {
    fn eps(&self, x_t: &Tensor, t: usize) -> Result<Tensor, SurrogateError> {
        let ab = self.schedule.alphas_bar[t];
        let var = ab * self.sigma * self.sigma + 1.0 - ab;
        let (c, m) = ((1.0 - ab).sqrt() / var, ab.sqrt() * self.mu);
        Ok(x_t.map(|x| c * (x - m)))
    }
}
