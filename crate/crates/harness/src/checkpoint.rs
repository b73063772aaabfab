//! Trained networks on disk. The checkpoint's config echo carries the
//! network topology and, for the environment net, the noise schedule, so a
//! file is enough to rebuild the predictor.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use grain_surrogate::unet::Activation;
use grain_surrogate::{BetaSchedule, DiffusionConfig, ParamStore, Sampler, UNet, UNetConfig};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Conditional DDPM noise model for environment deltas.
    Env,
    /// One-pass robot delta regressor.
    Robot,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Env => "f_e",
            ModelKind::Robot => "f_r",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub config: UNetConfig,
    pub params: ParamStore,
    /// Present for the environment net.
    pub diffusion: Option<DiffusionConfig>,
}

impl Model {
    pub fn net(&self) -> UNet {
        UNet::new(self.config.clone())
    }
}

fn echo(m: &Model) -> String {
    let mut s = format!("kind={} {}", m.kind.tag(), m.config.echo());
    if let Some(d) = &m.diffusion {
        s.push_str(&format!(
            " steps={} beta_start={} beta_end={}",
            d.num_steps, d.beta_start, d.beta_end
        ));
    }
    s
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid(format!("checkpoint header: {}", msg.into()))
}

fn field<'a>(pairs: &'a [(&str, &str)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| bad(format!("missing '{key}'")))
}

fn parsed<T: std::str::FromStr>(pairs: &[(&str, &str)], key: &str) -> Result<T> {
    let v = field(pairs, key)?;
    v.parse().map_err(|_| bad(format!("bad value '{v}' for '{key}'")))
}

fn from_echo(echo: &str, params: ParamStore) -> Result<Model> {
    let pairs: Vec<(&str, &str)> = echo.split_whitespace().filter_map(|t| t.split_once('=')).collect();
    let kind = match field(&pairs, "kind")? {
        "f_e" => ModelKind::Env,
        "f_r" => ModelKind::Robot,
        other => return Err(bad(format!("unknown kind '{other}'"))),
    };
    if field(&pairs, "act")? != "relu" {
        return Err(bad("only relu activations are supported"));
    }
    let channel_multipliers = field(&pairs, "mult")?
        .split(',')
        .map(|m| m.parse().map_err(|_| bad(format!("bad multiplier '{m}'"))))
        .collect::<Result<Vec<usize>>>()?;
    let time_embed_dim = match field(&pairs, "temb")? {
        "none" => None,
        d => Some(d.parse().map_err(|_| bad(format!("bad temb '{d}'")))?),
    };
    let config = UNetConfig {
        base_channels: parsed(&pairs, "base")?,
        channel_multipliers,
        res_blocks_per_level: parsed(&pairs, "res")?,
        dropout: parsed(&pairs, "dropout")?,
        time_embed_dim,
        activation: Activation::Relu,
        in_channels: parsed(&pairs, "in")?,
        out_channels: parsed(&pairs, "out")?,
    };
    let diffusion = match kind {
        ModelKind::Env => Some(DiffusionConfig {
            num_steps: parsed(&pairs, "steps")?,
            beta_start: parsed(&pairs, "beta_start")?,
            beta_end: parsed(&pairs, "beta_end")?,
            schedule: BetaSchedule::Linear,
            sampler: Sampler::Ddpm,
        }),
        ModelKind::Robot => None,
    };
    UNet::new(config.clone()).check_store(&params)?;
    Ok(Model {
        kind,
        config,
        params,
        diffusion,
    })
}

pub fn save_model(m: &Model, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    m.params.write(&echo(m), &mut out)?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let (echo, params) = ParamStore::read(&mut BufReader::new(File::open(path)?))?;
    from_echo(&echo, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn echo_round_trip() {
        for (kind, cfg, diffusion) in [
            (
                ModelKind::Env,
                UNetConfig::env_reference().with_base(2),
                Some(DiffusionConfig::default()),
            ),
            (ModelKind::Robot, UNetConfig::robot_reference().with_base(2), None),
        ] {
            let params = UNet::new(cfg.clone()).init(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
            let m = Model {
                kind,
                config: cfg.clone(),
                params: params.clone(),
                diffusion: diffusion.clone(),
            };
            let back = from_echo(&echo(&m), params).unwrap();
            assert_eq!(back.kind, kind);
            assert_eq!(back.config, cfg);
            assert_eq!(back.diffusion, diffusion);
        }
    }
}
