//! Input parameter distributions, sampling, and the isoprobabilistic map to
//! independent standard-normal coordinates used by the Metropolis-Hastings
//! samplers.

use std::collections::HashSet;
use std::ops::{Deref, Index};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::normal;

/// A scalar marginal distribution in the physical units of the modeled quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalDistribution {
    Normal {
        mean: f64,
        std: f64,
    },
    /// Parameterized by the mean and standard deviation of ln(x).
    Lognormal {
        log_mean: f64,
        log_std: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// Weibull parameterized by its mean strength and modulus. The scale is
    /// `mean_strength / Γ(1 + 1/modulus)`.
    WeibullByMean {
        mean_strength: f64,
        modulus: f64,
    },
}

impl MarginalDistribution {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        Self::Normal { mean, std }.validated()
    }

    pub fn lognormal(log_mean: f64, log_std: f64) -> Result<Self> {
        Self::Lognormal { log_mean, log_std }.validated()
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::Uniform { lower, upper }.validated()
    }

    pub fn weibull_by_mean(mean_strength: f64, modulus: f64) -> Result<Self> {
        Self::WeibullByMean {
            mean_strength,
            modulus,
        }
        .validated()
    }

    /// Builds a marginal from a family name and its positional parameters, as
    /// written in run-config files.
    pub fn from_family(family: &str, params: &[f64]) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(
                    "params",
                    format!(
                        "family `{family}` takes {n} parameters, got {}",
                        params.len()
                    ),
                ))
            }
        };
        match family.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => {
                want(2)?;
                Self::normal(params[0], params[1])
            }
            "lognormal" => {
                want(2)?;
                Self::lognormal(params[0], params[1])
            }
            "uniform" => {
                want(2)?;
                Self::uniform(params[0], params[1])
            }
            "weibull" | "weibull_by_mean" => {
                want(2)?;
                Self::weibull_by_mean(params[0], params[1])
            }
            other => Err(Error::invalid(
                "family",
                format!("unknown family `{other}`"),
            )),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Normal { .. } => "normal",
            Self::Lognormal { .. } => "lognormal",
            Self::Uniform { .. } => "uniform",
            Self::WeibullByMean { .. } => "weibull_by_mean",
        }
    }

    pub fn params(&self) -> [f64; 2] {
        match *self {
            Self::Normal { mean, std } => [mean, std],
            Self::Lognormal { log_mean, log_std } => [log_mean, log_std],
            Self::Uniform { lower, upper } => [lower, upper],
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => [mean_strength, modulus],
        }
    }

    fn validated(self) -> Result<Self> {
        let finite = self.params().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(self.family(), "parameters must be finite"));
        }
        match self {
            Self::Normal { std, .. } if std <= 0.0 => Err(Error::invalid("std", "must be > 0")),
            Self::Lognormal { log_std, .. } if log_std <= 0.0 => {
                Err(Error::invalid("log_std", "must be > 0"))
            }
            Self::Uniform { lower, upper } if lower >= upper => {
                Err(Error::invalid("lower", "must be < upper"))
            }
            Self::WeibullByMean { mean_strength, .. } if mean_strength <= 0.0 => {
                Err(Error::invalid("mean_strength", "must be > 0"))
            }
            Self::WeibullByMean { modulus, .. } if modulus <= 0.0 => {
                Err(Error::invalid("modulus", "must be > 0"))
            }
            ok => Ok(ok),
        }
    }

    fn weibull_scale(mean_strength: f64, modulus: f64) -> f64 {
        mean_strength / gamma(1.0 + 1.0 / modulus)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Normal { mean, .. } => mean,
            Self::Lognormal { log_mean, log_std } => (log_mean + 0.5 * log_std * log_std).exp(),
            Self::Uniform { lower, upper } => 0.5 * (lower + upper),
            Self::WeibullByMean { mean_strength, .. } => mean_strength,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Normal { std, .. } => std * std,
            Self::Lognormal { log_mean, log_std } => {
                let s2 = log_std * log_std;
                (s2.exp() - 1.0) * (2.0 * log_mean + s2).exp()
            }
            Self::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                let scale = Self::weibull_scale(mean_strength, modulus);
                scale * scale * gamma(1.0 + 2.0 / modulus) - mean_strength * mean_strength
            }
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        match *self {
            Self::Normal { .. } => x.is_finite(),
            Self::Lognormal { .. } | Self::WeibullByMean { .. } => x > 0.0 && x.is_finite(),
            Self::Uniform { lower, upper } => (lower..=upper).contains(&x),
        }
    }

    /// Natural log of the density; −∞ outside the support.
    pub fn log_pdf(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Normal { mean, std } => normal::ln_pdf((x - mean) / std) - std.ln(),
            Self::Lognormal { log_mean, log_std } => {
                normal::ln_pdf((x.ln() - log_mean) / log_std) - log_std.ln() - x.ln()
            }
            Self::Uniform { lower, upper } => -(upper - lower).ln(),
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                let scale = Self::weibull_scale(mean_strength, modulus);
                let z = x / scale;
                modulus.ln() - scale.ln() + (modulus - 1.0) * z.ln() - z.powf(modulus)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => normal::cdf((x - mean) / std),
            Self::Lognormal { log_mean, log_std } => {
                if x <= 0.0 {
                    0.0
                } else {
                    normal::cdf((x.ln() - log_mean) / log_std)
                }
            }
            Self::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let z = x / Self::weibull_scale(mean_strength, modulus);
                    -(-z.powf(modulus)).exp_m1()
                }
            }
        }
    }

    /// Inverse CDF for p in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain {
                what: "quantile probability",
                value: p,
            });
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => mean + std * normal::quantile_unchecked(p),
            Self::Lognormal { log_mean, log_std } => {
                (log_mean + log_std * normal::quantile_unchecked(p)).exp()
            }
            Self::Uniform { lower, upper } => lower + (upper - lower) * p,
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                let scale = Self::weibull_scale(mean_strength, modulus);
                scale * (-(-p).ln_1p()).powf(1.0 / modulus)
            }
        }
    }

    /// Maps x to the standard-normal coordinate u = Φ⁻¹(F(x)).
    pub fn to_standard_normal(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => (x - mean) / std,
            Self::Lognormal { log_mean, log_std } => (x.ln() - log_mean) / log_std,
            Self::Uniform { .. } => {
                let p = self
                    .cdf(x)
                    .clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                normal::quantile_unchecked(p)
            }
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                // Use the survival probability for the upper tail so large x
                // stays resolvable.
                let z = x / Self::weibull_scale(mean_strength, modulus);
                let zm = z.powf(modulus);
                let cdf = -(-zm).exp_m1();
                if cdf <= 0.5 {
                    normal::quantile_unchecked(cdf.max(f64::MIN_POSITIVE))
                } else {
                    -normal::quantile_unchecked((-zm).exp().max(f64::MIN_POSITIVE))
                }
            }
        }
    }

    /// Inverse of [`to_standard_normal`](Self::to_standard_normal).
    pub fn from_standard_normal(&self, u: f64) -> f64 {
        match *self {
            Self::Normal { mean, std } => mean + std * u,
            Self::Lognormal { log_mean, log_std } => (log_mean + log_std * u).exp(),
            Self::Uniform { lower, upper } => {
                let p = if u <= 0.0 {
                    normal::cdf(u)
                } else {
                    1.0 - normal::sf(u)
                };
                lower + (upper - lower) * p
            }
            Self::WeibullByMean {
                mean_strength,
                modulus,
            } => {
                let scale = Self::weibull_scale(mean_strength, modulus);
                // -ln(1 - Φ(u)), computed from whichever tail is accurate.
                let cum_hazard = if u <= 0.0 {
                    -(-normal::cdf(u)).ln_1p()
                } else {
                    -normal::sf(u).ln()
                };
                scale * cum_hazard.powf(1.0 / modulus)
            }
        }
    }

    /// Draws one value by inverting the CDF at a uniform from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.sample(Open01);
        self.quantile_unchecked(p)
    }
}

/// A named marginal as written in configuration files: `{name, family, params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDecl {
    pub name: String,
    pub family: String,
    pub params: Vec<f64>,
}

/// Ordered set of independent marginals defining the model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MarginalDecl>", into = "Vec<MarginalDecl>")]
pub struct ParameterSpace {
    names: Vec<String>,
    marginals: Vec<MarginalDistribution>,
}

impl ParameterSpace {
    pub fn new<S: Into<String>>(
        marginals: impl IntoIterator<Item = (S, MarginalDistribution)>,
    ) -> Result<Self> {
        let (names, marginals): (Vec<String>, Vec<_>) = marginals
            .into_iter()
            .map(|(n, m)| (n.into(), m.validated()))
            .map(|(n, m)| m.map(|m| (n, m)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        if marginals.is_empty() {
            return Err(Error::invalid("space", "at least one marginal is required"));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid("space", format!("duplicate name `{name}`")));
            }
        }
        Ok(Self { names, marginals })
    }

    /// `dim` independent standard normal inputs named `x1..xD`.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::new((1..=dim).map(|d| {
            (
                format!("x{d}"),
                MarginalDistribution::Normal {
                    mean: 0.0,
                    std: 1.0,
                },
            )
        }))
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn marginals(&self) -> &[MarginalDistribution] {
        &self.marginals
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> InputSample {
        InputSample(self.marginals.iter().map(|m| m.sample(rng)).collect())
    }

    /// `n` stratified samples: each marginal's probability axis is cut into
    /// `n` equal strata, one point per stratum, strata shuffled per dimension.
    pub fn latin_hypercube<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<InputSample> {
        let mut columns = Vec::with_capacity(self.dim());
        for m in &self.marginals {
            let mut strata: Vec<usize> = (0..n).collect();
            strata.shuffle(rng);
            let col: Vec<f64> = strata
                .into_iter()
                .map(|k| {
                    let u: f64 = rng.sample(Open01);
                    m.quantile_unchecked((k as f64 + u) / n as f64)
                })
                .collect();
            columns.push(col);
        }
        (0..n)
            .map(|i| InputSample(columns.iter().map(|c| c[i]).collect()))
            .collect()
    }

    /// Joint log density (independent marginals).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.marginals
            .iter()
            .zip(x)
            .map(|(m, &v)| m.log_pdf(v))
            .sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.marginals.iter().zip(x).all(|(m, &v)| m.in_support(v))
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn to_standard_normal(&self, x: &[f64]) -> Vec<f64> {
        self.marginals
            .iter()
            .zip(x)
            .map(|(m, &v)| m.to_standard_normal(v))
            .collect()
    }

    pub fn from_standard_normal(&self, u: &[f64]) -> InputSample {
        InputSample(
            self.marginals
                .iter()
                .zip(u)
                .map(|(m, &v)| m.from_standard_normal(v))
                .collect(),
        )
    }
}

impl TryFrom<Vec<MarginalDecl>> for ParameterSpace {
    type Error = Error;

    fn try_from(decls: Vec<MarginalDecl>) -> Result<Self> {
        let marginals = decls
            .into_iter()
            .map(|d| {
                MarginalDistribution::from_family(&d.family, &d.params)
                    .map(|m| (d.name.clone(), m))
                    .map_err(|e| e.context(format!("marginal `{}`", d.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(marginals)
    }
}

impl From<ParameterSpace> for Vec<MarginalDecl> {
    fn from(space: ParameterSpace) -> Self {
        space
            .names
            .into_iter()
            .zip(space.marginals)
            .map(|(name, m)| MarginalDecl {
                name,
                family: m.family().to_string(),
                params: m.params().to_vec(),
            })
            .collect()
    }
}

/// One point of the input space, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputSample(pub Vec<f64>);

impl InputSample {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for InputSample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for InputSample {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for InputSample {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}
