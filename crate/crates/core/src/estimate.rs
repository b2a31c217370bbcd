//! Failure-probability estimates and the estimator formulas shared by the drivers.

use serde::{Deserialize, Serialize};

use crate::normal;

/// Per-level summary of a subset simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    /// 1-based level index.
    pub index: usize,
    /// Threshold F_i fixed at the end of the level (0 on the final level).
    pub threshold: f64,
    /// Conditional probability P(g > F_i | g > F_{i-1}).
    pub probability: f64,
    #[serde(with = "finite_or_null")]
    pub cov: f64,
    pub samples: usize,
    pub seeds: usize,
    /// Fraction of MH candidates that moved the chain; absent on level 1.
    pub acceptance_rate: Option<f64>,
    pub hf_calls: u64,
}

/// A failure-probability estimate with its estimated coefficient of variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEstimate {
    pub p_f: f64,
    /// Infinite when p_f = 0; serialized as `null`.
    #[serde(with = "finite_or_null")]
    pub cov: f64,
    /// −Φ⁻¹(p_f); absent when p_f is 0 or 1.
    pub beta: Option<f64>,
    pub hf_calls: u64,
    #[serde(default)]
    pub lf_calls: u64,
    pub total_samples: u64,
    pub converged: bool,
    /// Set when a level produced no seeds or no failure was ever observed.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subsets: Vec<SubsetSummary>,
    /// Chain-correlation corrected COV, supplementary only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_corrected: Option<f64>,
}

impl FailureEstimate {
    pub fn new(p_f: f64, cov: f64, hf_calls: u64, total_samples: u64) -> Self {
        Self {
            p_f,
            cov,
            beta: normal::reliability_index(p_f),
            hf_calls,
            lf_calls: 0,
            total_samples,
            converged: true,
            degenerate: false,
            subsets: Vec::new(),
            cov_corrected: None,
        }
    }
}

/// Learning function U = |μ| / σ, with U = +∞ for σ = 0 and μ ≠ 0 and
/// U = 0 when both vanish.
pub fn u_function(mean: f64, std: f64) -> f64 {
    shifted_u(mean, 0.0, std)
}

/// U relative to a level f: |mean − f| / σ, with the σ = 0 conventions of
/// [`u_function`].
pub fn shifted_u(mean: f64, level: f64, std: f64) -> f64 {
    let gap = (mean - level).abs();
    if std > 0.0 {
        gap / std
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// COV of a Monte Carlo probability estimate from `n` samples:
/// √((1 − p)/(p n)); infinite for p = 0.
pub fn cov_mcs(p: f64, n: usize) -> f64 {
    if p <= 0.0 || n == 0 {
        return f64::INFINITY;
    }
    ((1.0 - p) / (p * n as f64)).max(0.0).sqrt()
}

/// Overall COV of a product of independent estimates, √(Σ δ_i²).
pub fn cov_overall(deltas: &[f64]) -> f64 {
    deltas.iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// One pool member's contribution to the weighted estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PfRecord {
    /// Evaluated by the high-fidelity model: the failure indicator.
    Exact { failed: bool },
    /// Classified by the surrogate: predicted indicator and its U value.
    Predicted { failed: bool, u: f64 },
}

impl PfRecord {
    /// Probability that this sample lies in the failure domain: the indicator
    /// for exact records, Φ(U) for predicted failures and Φ(−U) for predicted
    /// safe samples.
    pub fn probability(&self) -> f64 {
        match *self {
            PfRecord::Exact { failed } => f64::from(u8::from(failed)),
            PfRecord::Predicted { failed: true, u } => normal::cdf(u),
            PfRecord::Predicted { failed: false, u } => normal::sf(u),
        }
    }
}

/// Mean of the per-sample failure probabilities; 0 for an empty slice.
pub fn estimate_pf_weighted(records: &[PfRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(PfRecord::probability).sum::<f64>() / records.len() as f64
}

/// Product of two independent estimates, e.g. a conditional probability times
/// the probability of its conditioning event. COVs combine to first order.
pub fn compose_pf(a: &FailureEstimate, b: &FailureEstimate) -> FailureEstimate {
    let p = a.p_f * b.p_f;
    let mut out = FailureEstimate::new(
        p,
        (a.cov * a.cov + b.cov * b.cov).sqrt(),
        a.hf_calls + b.hf_calls,
        a.total_samples + b.total_samples,
    );
    out.lf_calls = a.lf_calls + b.lf_calls;
    out.converged = a.converged && b.converged;
    out.degenerate = a.degenerate || b.degenerate;
    out
}

/// Serializes non-finite floats as `null` and reads `null` back as +∞.
pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
