//! Synthetic masked channels `z̃ = z ⊙ m + ε` with known structure.

use forgetnet_tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskRule {
    /// Constant per-dimension values; a single value is broadcast.
    Fixed(Vec<f64>),
    /// Independent of `z`, uniform on `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// `high` with probability `p`, otherwise `low`.
    Bernoulli { p: f64, low: f64, high: f64 },
    /// `sigmoid(gain · z + offset)`, so the mask depends on the latent.
    Gated { gain: f64, offset: f64 },
}

impl MaskRule {
    pub fn is_fixed(&self) -> bool {
        matches!(self, MaskRule::Fixed(_))
    }

    fn fixed_value(&self, dim: usize) -> Option<f64> {
        match self {
            MaskRule::Fixed(v) if v.len() == 1 => Some(v[0]),
            MaskRule::Fixed(v) => v.get(dim).copied(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub d: usize,
    pub z_mean: f64,
    pub z_std: f64,
    /// Pairwise correlation of the latent dimensions.
    pub correlation: f64,
    pub mask: MaskRule,
    pub sigma_eps: f64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            d: 1,
            z_mean: 0.0,
            z_std: 1.0,
            correlation: 0.0,
            mask: MaskRule::Fixed(vec![1.0]),
            sigma_eps: 0.5,
        }
    }
}

/// One draw of `n` rows from a channel.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub z: Tensor,
    pub m: Tensor,
    pub z_tilde: Tensor,
}

impl ChannelSample {
    pub fn column(t: &Tensor, j: usize) -> Vec<f64> {
        (0..t.rows()).map(|i| t.row(i)[j]).collect()
    }
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{name} = {v} outside [0, 1]")))
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Invalid("channel needs d ≥ 1".into()));
        }
        if !(self.z_std >= 0.0 && self.z_std.is_finite() && self.z_mean.is_finite()) {
            return Err(Error::Invalid("latent moments must be finite, std ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::Invalid("correlation must lie in [0, 1)".into()));
        }
        if !(self.sigma_eps > 0.0 && self.sigma_eps.is_finite()) {
            return Err(Error::Invalid("sigma_eps must be positive".into()));
        }
        match &self.mask {
            MaskRule::Fixed(v) => {
                if v.len() != 1 && v.len() != self.d {
                    return Err(Error::Invalid(format!(
                        "{} fixed mask values for d = {}",
                        v.len(),
                        self.d
                    )));
                }
                for &x in v {
                    in_unit("mask value", x)?;
                }
            }
            MaskRule::Uniform { low, high } => {
                in_unit("mask.low", *low)?;
                in_unit("mask.high", *high)?;
                if low > high {
                    return Err(Error::Invalid("mask.low > mask.high".into()));
                }
            }
            MaskRule::Bernoulli { p, low, high } => {
                in_unit("mask.p", *p)?;
                in_unit("mask.low", *low)?;
                in_unit("mask.high", *high)?;
            }
            MaskRule::Gated { gain, offset } => {
                if !(gain.is_finite() && offset.is_finite()) {
                    return Err(Error::Invalid("gate parameters must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn var_eps(&self) -> f64 {
        self.sigma_eps * self.sigma_eps
    }

    pub fn fixed_mask(&self, dim: usize) -> Option<f64> {
        self.mask.fixed_value(dim)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ChannelSample> {
        self.validate()?;
        let d = self.d;
        let (shared, own) = (self.correlation.sqrt(), (1.0 - self.correlation).sqrt());
        let mut z = Vec::with_capacity(n * d);
        let mut m = Vec::with_capacity(n * d);
        let mut zt = Vec::with_capacity(n * d);
        for _ in 0..n {
            let common: f64 = rng.sample(StandardNormal);
            for j in 0..d {
                let g: f64 = rng.sample(StandardNormal);
                let zj = self.z_mean + self.z_std * (shared * common + own * g);
                let mj = match &self.mask {
                    MaskRule::Fixed(_) => self.mask.fixed_value(j).unwrap_or(1.0),
                    MaskRule::Uniform { low, high } => rng.gen_range(*low..=*high),
                    MaskRule::Bernoulli { p, low, high } => {
                        if rng.gen_bool(*p) {
                            *high
                        } else {
                            *low
                        }
                    }
                    MaskRule::Gated { gain, offset } => 1.0 / (1.0 + (-(gain * zj + offset)).exp()),
                };
                let eps: f64 = rng.sample(StandardNormal);
                z.push(zj);
                m.push(mj);
                zt.push(mj * zj + self.sigma_eps * eps);
            }
        }
        Ok(ChannelSample {
            z: Tensor::from_vec(&[n, d], z),
            m: Tensor::from_vec(&[n, d], m),
            z_tilde: Tensor::from_vec(&[n, d], zt),
        })
    }
}

/// A channel plus the sampling settings given alongside it on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRequest {
    pub spec: ChannelSpec,
    pub samples: usize,
    pub seed: u64,
    pub estimator: String,
}

impl Default for ChannelRequest {
    fn default() -> Self {
        Self {
            spec: ChannelSpec::default(),
            samples: 5000,
            seed: 0,
            estimator: "binned".into(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Invalid(format!("channel spec: `{key}` cannot take `{v}`")))
}

/// Parses `key = value` settings separated by `;` or newlines, with `#`
/// comments, for example `d=2; mask=uniform; mask.low=0.2; sigma_eps=0.5`.
/// `mask.values` takes a comma-separated list.
pub fn parse_channel_request(text: &str) -> Result<ChannelRequest> {
    let mut req = ChannelRequest::default();
    let mut kind = "fixed".to_string();
    let mut values = vec![1.0];
    let (mut low, mut high, mut p) = (0.0, 1.0, 0.5);
    let (mut gain, mut offset) = (1.0, 0.0);
    let pairs = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(';'))
        .map(str::trim)
        .filter(|p| !p.is_empty());
    for pair in pairs {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("channel spec: expected key=value, got `{pair}`")))?;
        let (k, v) = (k.trim(), v.trim());
        let s = &mut req.spec;
        match k {
            "d" => s.d = num(k, v)?,
            "z_mean" => s.z_mean = num(k, v)?,
            "z_std" => s.z_std = num(k, v)?,
            "correlation" => s.correlation = num(k, v)?,
            "sigma_eps" => s.sigma_eps = num(k, v)?,
            "mask" => kind = v.to_string(),
            "mask.values" => {
                values = v.split(',').map(|x| num(k, x.trim())).collect::<Result<_>>()?
            }
            "mask.low" => low = num(k, v)?,
            "mask.high" => high = num(k, v)?,
            "mask.p" => p = num(k, v)?,
            "mask.gain" => gain = num(k, v)?,
            "mask.offset" => offset = num(k, v)?,
            "samples" => req.samples = num(k, v)?,
            "seed" => req.seed = num(k, v)?,
            "estimator" => req.estimator = v.to_string(),
            _ => return Err(Error::Invalid(format!("channel spec: unknown key `{k}`"))),
        }
    }
    req.spec.mask = match kind.as_str() {
        "fixed" => MaskRule::Fixed(values),
        "uniform" => MaskRule::Uniform { low, high },
        "bernoulli" => MaskRule::Bernoulli { p, low, high },
        "gated" => MaskRule::Gated { gain, offset },
        other => return Err(Error::Invalid(format!("channel spec: unknown mask `{other}`"))),
    };
    if req.samples < 10 {
        return Err(Error::Invalid("channel spec: samples must be at least 10".into()));
    }
    req.spec.validate()?;
    Ok(req)
}

/// Twenty channels spanning the mask rules, noise levels and correlations.
pub fn channel_suite() -> Vec<ChannelSpec> {
    let base = ChannelSpec::default();
    let mut out = Vec::new();
    for (i, sigma) in [0.1, 0.3, 1.0].into_iter().enumerate() {
        out.push(ChannelSpec {
            mask: MaskRule::Fixed(vec![[1.0, 0.5, 0.2][i]]),
            sigma_eps: sigma,
            ..base.clone()
        });
    }
    out.push(ChannelSpec {
        d: 3,
        mask: MaskRule::Fixed(vec![0.0, 0.4, 0.9]),
        sigma_eps: 0.3,
        ..base.clone()
    });
    out.push(ChannelSpec {
        d: 2,
        z_std: 2.0,
        correlation: 0.6,
        mask: MaskRule::Fixed(vec![0.7]),
        sigma_eps: 0.5,
        ..base.clone()
    });
    for (low, high, sigma) in [(0.0, 1.0, 0.3), (0.4, 0.6, 0.2), (0.8, 1.0, 1.0), (0.0, 0.3, 0.1)] {
        out.push(ChannelSpec {
            mask: MaskRule::Uniform { low, high },
            sigma_eps: sigma,
            ..base.clone()
        });
    }
    out.push(ChannelSpec {
        d: 2,
        z_mean: 1.5,
        correlation: 0.3,
        mask: MaskRule::Uniform { low: 0.2, high: 0.9 },
        sigma_eps: 0.4,
        ..base.clone()
    });
    for (p, low, high, sigma) in [
        (0.5, 0.0, 1.0, 0.3),
        (0.1, 0.0, 1.0, 0.2),
        (0.9, 0.2, 0.8, 0.5),
        (0.5, 0.1, 0.9, 1.0),
    ] {
        out.push(ChannelSpec {
            mask: MaskRule::Bernoulli { p, low, high },
            sigma_eps: sigma,
            ..base.clone()
        });
    }
    out.push(ChannelSpec {
        d: 2,
        z_mean: -1.0,
        z_std: 1.5,
        mask: MaskRule::Bernoulli { p: 0.3, low: 0.0, high: 1.0 },
        sigma_eps: 0.5,
        ..base.clone()
    });
    for (gain, offset, sigma) in [(1.0, 0.0, 0.3), (4.0, 0.0, 0.1), (-2.0, 1.0, 0.5), (0.5, -2.0, 1.0)] {
        out.push(ChannelSpec {
            mask: MaskRule::Gated { gain, offset },
            sigma_eps: sigma,
            ..base.clone()
        });
    }
    out.push(ChannelSpec {
        d: 3,
        z_mean: 0.5,
        correlation: 0.5,
        mask: MaskRule::Gated { gain: 2.0, offset: -0.5 },
        sigma_eps: 0.3,
        ..base
    });
    out
}
