//! Adaptive-Kriging Monte Carlo simulation.
//!
//! A GP surrogate classifies a Monte Carlo candidate pool; the pool member
//! with the smallest U is sent to the high-fidelity model until every U
//! reaches the threshold, then the pool grows until the estimate's COV meets
//! the target. The GP works in the standard-normal coordinates of the space.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{cov_mcs, estimate_pf_weighted, u_function, FailureEstimate, PfRecord};
use crate::kriging::{FitOptions, GpModel};
use crate::models::Evaluator;
use crate::param_space::ParameterSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AkmcsConfig {
    pub n_initial_doe: usize,
    pub initial_pool: usize,
    pub pool_increment: usize,
    /// Upper bound on the pool; reaching it ends the run unconverged.
    pub max_pool: usize,
    pub u_threshold: f64,
    pub target_cov: f64,
    /// Total high-fidelity budget, initial design included.
    pub max_hf_calls: usize,
    pub seed: u64,
    pub gp: FitOptions,
}

impl Default for AkmcsConfig {
    fn default() -> Self {
        Self {
            n_initial_doe: 12,
            initial_pool: 1500,
            pool_increment: 1000,
            max_pool: 200_000,
            u_threshold: 2.0,
            target_cov: 0.05,
            max_hf_calls: 1000,
            seed: 0,
            gp: FitOptions::default(),
        }
    }
}

impl AkmcsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_initial_doe < 2 {
            return Err(Error::invalid("n_initial_doe", "must be >= 2"));
        }
        if self.initial_pool == 0 || self.initial_pool > self.max_pool {
            return Err(Error::invalid("initial_pool", "must be in 1..=max_pool"));
        }
        if self.pool_increment == 0 {
            return Err(Error::invalid("pool_increment", "must be >= 1"));
        }
        if !(self.u_threshold > 0.0) {
            return Err(Error::invalid("u_threshold", "must be > 0"));
        }
        if !(self.target_cov > 0.0 && self.target_cov < 1.0) {
            return Err(Error::invalid("target_cov", "must be in (0, 1)"));
        }
        if self.max_hf_calls < self.n_initial_doe {
            return Err(Error::invalid(
                "max_hf_calls",
                "must cover the initial design",
            ));
        }
        self.gp.validate().map_err(|e| e.context("gp"))
    }
}

/// One learning iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkmcsTraceRow {
    pub iteration: usize,
    pub pool_size: usize,
    #[serde(rename = "min_U")]
    pub min_u: f64,
    pub hf_calls: u64,
    pub p_f: f64,
    pub cov: f64,
}

#[derive(Debug, Clone)]
pub struct AkmcsRun {
    pub estimate: FailureEstimate,
    pub trace: Vec<AkmcsTraceRow>,
    pub surrogate: GpModel,
}

struct PoolPoint {
    u: Vec<f64>,
    /// High-fidelity output, once evaluated.
    exact: Option<f64>,
}

pub fn run_akmcs(space: &ParameterSpace, hf: &Evaluator, config: &AkmcsConfig) -> Result<AkmcsRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let calls_at_start = hf.calls();
    let used = |hf: &Evaluator| hf.calls() - calls_at_start;

    let doe = space.latin_hypercube(config.n_initial_doe, &mut rng);
    let mut doe_u = Vec::with_capacity(doe.len());
    let mut doe_y = Vec::with_capacity(doe.len());
    for (i, x) in doe.iter().enumerate() {
        doe_y.push(
            hf.evaluate(x)
                .map_err(|e| e.context(format!("initial design point {i}")))?,
        );
        doe_u.push(space.to_standard_normal(x));
    }
    let mut gp =
        GpModel::fit(&doe_u, &doe_y, config.gp.clone()).map_err(|e| e.context("initial GP fit"))?;

    let mut pool: Vec<PoolPoint> = Vec::new();
    let grow = |pool: &mut Vec<PoolPoint>, n: usize, rng: &mut ChaCha8Rng| {
        pool.extend((0..n).map(|_| PoolPoint {
            u: space.to_standard_normal(&space.sample(rng)),
            exact: None,
        }));
    };
    grow(&mut pool, config.initial_pool, &mut rng);

    let mut trace = Vec::new();
    let mut buf = Vec::new();
    let mut records = Vec::new();
    let mut iteration = 0;
    let (p_f, cov, converged, degenerate) = loop {
        records.clear();
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in pool.iter().enumerate() {
            let record = match p.exact {
                Some(y) => PfRecord::Exact { failed: y >= 0.0 },
                None => {
                    let pred = gp.predict_with(&p.u, &mut buf);
                    let u = u_function(pred.mean, pred.std);
                    if best.map_or(true, |(_, b)| u < b) {
                        best = Some((i, u));
                    }
                    PfRecord::Predicted {
                        failed: pred.mean >= 0.0,
                        u,
                    }
                }
            };
            records.push(record);
        }
        let p_f = estimate_pf_weighted(&records);
        let cov = cov_mcs(p_f, pool.len());
        let min_u = best.map_or(f64::INFINITY, |(_, u)| u);
        trace.push(AkmcsTraceRow {
            iteration,
            pool_size: pool.len(),
            min_u,
            hf_calls: used(hf),
            p_f,
            cov,
        });
        iteration += 1;

        match best {
            Some((idx, u)) if u < config.u_threshold => {
                if used(hf) >= config.max_hf_calls as u64 {
                    break (p_f, cov, false, false);
                }
                let x = space.from_standard_normal(&pool[idx].u);
                let y = hf
                    .evaluate(&x)
                    .map_err(|e| e.context(format!("pool point {idx}")))?;
                pool[idx].exact = Some(y);
                gp.add_point(&pool[idx].u, y, true)
                    .map_err(|e| e.context(format!("GP update after {} HF calls", used(hf))))?;
            }
            _ => {
                if p_f == 0.0 {
                    break (p_f, cov, false, true);
                }
                if cov <= config.target_cov {
                    break (p_f, cov, true, false);
                }
                if pool.len() + config.pool_increment > config.max_pool {
                    break (p_f, cov, false, false);
                }
                grow(&mut pool, config.pool_increment, &mut rng);
            }
        }
    };

    let mut estimate = FailureEstimate::new(p_f, cov, used(hf), pool.len() as u64);
    estimate.converged = converged;
    estimate.degenerate = degenerate;
    Ok(AkmcsRun {
        estimate,
        trace,
        surrogate: gp,
    })
}
