//! Run configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rarefail_core::models::FnLimitState;
use rarefail_core::{
    borehole_space, AkmcsConfig, Borehole, CoupledConfig, Evaluator, Linear, ParameterSpace,
    PerturbedBorehole, Strategy, Subprocess, SusConfig,
};
use serde::{Deserialize, Serialize};

const PRESETS: &[(&str, &str)] = &[(
    "borehole_appendix_a",
    include_str!("../presets/borehole_appendix_a.toml"),
)];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Akmcs,
    Sus,
    Coupled,
}

/// A limit-state function. Failure is `g >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDecl {
    /// `g = F(x) - threshold` with the borehole flow rate F.
    Borehole {
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        cost_seconds: f64,
    },
    /// Low-fidelity borehole variant.
    PerturbedBorehole {
        #[serde(default)]
        distortion: f64,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        cost_seconds: f64,
    },
    /// `g = sum(x)/sqrt(D) - beta0` on `dim` standard normal inputs.
    Linear {
        beta0: f64,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        cost_seconds: f64,
    },
    Constant {
        value: f64,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        cost_seconds: f64,
    },
    /// External program speaking the line protocol; needs an explicit `space`.
    Subprocess {
        command: Vec<String>,
        #[serde(default)]
        cost_seconds: f64,
    },
}

fn default_threshold() -> f64 {
    300.0
}

fn default_dim() -> usize {
    2
}

impl ModelDecl {
    fn cost_seconds(&self) -> f64 {
        match self {
            ModelDecl::Borehole { cost_seconds, .. }
            | ModelDecl::PerturbedBorehole { cost_seconds, .. }
            | ModelDecl::Linear { cost_seconds, .. }
            | ModelDecl::Constant { cost_seconds, .. }
            | ModelDecl::Subprocess { cost_seconds, .. } => *cost_seconds,
        }
    }

    /// Input space implied by the model, if any.
    fn default_space(&self) -> Option<ParameterSpace> {
        match self {
            ModelDecl::Borehole { .. } | ModelDecl::PerturbedBorehole { .. } => Some(borehole_space()),
            ModelDecl::Linear { dim, .. } | ModelDecl::Constant { dim, .. } => ParameterSpace::standard_normal(*dim).ok(),
            ModelDecl::Subprocess { .. } => None,
        }
    }

    fn expected_dim(&self) -> Option<usize> {
        match self {
            ModelDecl::Borehole { .. } | ModelDecl::PerturbedBorehole { .. } => Some(8),
            ModelDecl::Linear { dim, .. } | ModelDecl::Constant { dim, .. } => Some(*dim),
            ModelDecl::Subprocess { .. } => None,
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |msg: &str| anyhow::anyhow!("{field}: {msg}");
        if !(self.cost_seconds() >= 0.0 && self.cost_seconds().is_finite()) {
            return Err(bad("cost_seconds must be a finite value >= 0"));
        }
        match self {
            ModelDecl::Borehole { threshold, .. } if !threshold.is_finite() => Err(bad("threshold must be finite")),
            ModelDecl::PerturbedBorehole { distortion, threshold, .. }
                if !(distortion.is_finite() && threshold.is_finite() && *distortion > -1.0) =>
            {
                Err(bad("distortion must be > -1 and threshold finite"))
            }
            ModelDecl::Linear { beta0, dim, .. } if !beta0.is_finite() || *dim == 0 => {
                Err(bad("beta0 must be finite and dim >= 1"))
            }
            ModelDecl::Constant { value, dim, .. } if !value.is_finite() || *dim == 0 => {
                Err(bad("value must be finite and dim >= 1"))
            }
            ModelDecl::Subprocess { command, .. } if command.is_empty() => Err(bad("command must not be empty")),
            _ => Ok(()),
        }
    }

    /// Builds the evaluator. Subprocess models start lazily on first use.
    pub fn evaluator(&self) -> Result<Evaluator> {
        let ev = match self {
            ModelDecl::Borehole { threshold, .. } => Evaluator::new(Borehole { threshold: *threshold }),
            ModelDecl::PerturbedBorehole { distortion, threshold, .. } => Evaluator::new(PerturbedBorehole {
                distortion: *distortion,
                threshold: *threshold,
            }),
            ModelDecl::Linear { beta0, .. } => Evaluator::new(Linear { beta0: *beta0 }),
            ModelDecl::Constant { value, .. } => {
                let v = *value;
                Evaluator::new(FnLimitState::new(format!("constant({v})"), move |_: &[f64]| v))
            }
            ModelDecl::Subprocess { command, .. } => Evaluator::new(Subprocess::new(command.clone())?),
        };
        Ok(ev.with_cost(self.cost_seconds()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub driver: Driver,
    /// Overrides the seed of the driver block when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub model: ModelDecl,
    /// Low-fidelity model for the `physics_lf` strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_model: Option<ModelDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<ParameterSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub akmcs: Option<AkmcsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sus: Option<SusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<CoupledConfig>,
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(text)?)
        } else {
            Ok(toml::from_str(text)?)
        }
    }

    /// Loads a config file, or a bundled preset when `source` names one and
    /// is not an existing path.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if !path.exists() {
            if let Some((_, text)) = PRESETS.iter().find(|(n, _)| *n == source) {
                return Self::parse(text).with_context(|| format!("preset `{source}`"));
            }
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn preset(name: &str) -> Result<Self> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text).with_context(|| format!("preset `{name}`")),
            None => bail!("unknown preset `{name}`"),
        }
    }

    /// Fills in the driver block and applies the seed, giving the exact
    /// configuration that gets executed and echoed.
    pub fn resolved(mut self) -> Self {
        match self.driver {
            Driver::Akmcs => {
                let block = self.akmcs.get_or_insert_with(AkmcsConfig::default);
                if let Some(seed) = self.seed {
                    block.seed = seed;
                }
                self.seed = Some(block.seed);
            }
            Driver::Sus => {
                let block = self.sus.get_or_insert_with(SusConfig::default);
                if let Some(seed) = self.seed {
                    block.seed = seed;
                }
                self.seed = Some(block.seed);
            }
            Driver::Coupled => {
                let block = self.coupled.get_or_insert_with(CoupledConfig::default);
                if let Some(seed) = self.seed {
                    block.subset.seed = seed;
                }
                self.seed = Some(block.subset.seed);
            }
        }
        if self.space.is_none() {
            self.space = self.model.default_space();
        }
        self
    }

    /// Checks every block. Nothing is evaluated.
    pub fn validate(&self) -> Result<()> {
        self.model.validate("model")?;
        let space = match &self.space {
            Some(s) => s,
            None => bail!("space: required for a subprocess model"),
        };
        if let Some(d) = self.model.expected_dim() {
            if d != space.dim() {
                bail!("space: model expects {d} inputs, space declares {}", space.dim());
            }
        }
        let physics = matches!(
            (&self.driver, &self.coupled),
            (Driver::Coupled, Some(CoupledConfig { strategy: Strategy::PhysicsLf, .. }))
        );
        match (&self.lf_model, physics) {
            (Some(lf), true) => {
                lf.validate("lf_model")?;
                if let Some(d) = lf.expected_dim() {
                    if d != space.dim() {
                        bail!("lf_model: expects {d} inputs, space declares {}", space.dim());
                    }
                }
            }
            (None, true) => bail!("lf_model: required by strategy physics_lf"),
            (Some(_), false) => bail!("lf_model: only used by the coupled driver with strategy physics_lf"),
            (None, false) => {}
        }
        let block = |name: &str, present: bool| -> Result<()> {
            if present {
                bail!("{name}: block given but driver is {:?}", self.driver)
            }
            Ok(())
        };
        match self.driver {
            Driver::Akmcs => {
                block("sus", self.sus.is_some())?;
                block("coupled", self.coupled.is_some())?;
                self.akmcs.clone().unwrap_or_default().validate().context("akmcs")
            }
            Driver::Sus => {
                block("akmcs", self.akmcs.is_some())?;
                block("coupled", self.coupled.is_some())?;
                let sus = self.sus.clone().unwrap_or_default();
                sus.validate().context("sus")
            }
            Driver::Coupled => {
                block("akmcs", self.akmcs.is_some())?;
                block("sus", self.sus.is_some())?;
                self.coupled.clone().unwrap_or_default().validate().context("coupled")
            }
        }
    }
}
