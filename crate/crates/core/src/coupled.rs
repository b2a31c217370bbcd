//! Subset simulation coupled with active learning and multifidelity correction.
//!
//! Every candidate sample is either classified by a surrogate or sent to the
//! high-fidelity model, decided per sample by a U function measured against
//! the running estimate of the current level's threshold. The surrogate is a
//! GP on the HF output (`GpOnly`) or a low-fidelity model plus a GP on the
//! discrepancy y_HF − y_LF. All GPs work in standard-normal coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{cov_mcs, cov_overall, shifted_u, FailureEstimate, SubsetSummary};
use crate::kriging::{FitOptions, GpModel};
use crate::mlp::{MlpConfig, MlpModel};
use crate::models::Evaluator;
use crate::param_space::ParameterSpace;
use crate::subset::{
    chain_indicators, chain_lengths, close_level, correlated_cov, empirical_quantile, physical,
    propose_standard, round_robin, RunningQuantile, State, SusConfig,
};

/// Surrogate used in place of the HF model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// A single GP on the HF output.
    GpOnly,
    /// GP low-fidelity model trained on an initial HF design, plus GP correction.
    GpLf,
    /// Neural-network low-fidelity model trained on an initial HF design, plus GP correction.
    MlpLf {
        #[serde(default)]
        mlp: MlpConfig,
    },
    /// External low-fidelity evaluator, plus GP correction.
    PhysicsLf,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::GpOnly => "gp_only",
            Strategy::GpLf => "gp_lf",
            Strategy::MlpLf { .. } => "mlp_lf",
            Strategy::PhysicsLf => "physics_lf",
        }
    }

    fn is_data_driven(&self) -> bool {
        matches!(self, Strategy::GpLf | Strategy::MlpLf { .. })
    }
}

/// When the correction GP re-optimizes its hyperparameters. Below
/// `full_refit_until` training points every HF call triggers a refit; beyond
/// it, only when the set has grown by `refit_growth` since the last refit.
/// Other updates extend the Cholesky factor with fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainPolicy {
    pub full_refit_until: usize,
    pub refit_growth: f64,
}

impl Default for RetrainPolicy {
    fn default() -> Self {
        Self {
            full_refit_until: 64,
            refit_growth: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledConfig {
    pub subset: SusConfig,
    pub u_threshold: f64,
    /// HF evaluations used to start each correction GP (and to train a
    /// data-driven LF).
    pub n_initial: usize,
    pub fresh_gp_per_subset: bool,
    pub strategy: Strategy,
    pub gp: FitOptions,
    pub retrain: RetrainPolicy,
}

impl Default for CoupledConfig {
    fn default() -> Self {
        Self {
            subset: SusConfig::default(),
            u_threshold: 2.0,
            n_initial: 12,
            fresh_gp_per_subset: false,
            strategy: Strategy::GpOnly,
            gp: FitOptions::default(),
            retrain: RetrainPolicy::default(),
        }
    }
}

impl CoupledConfig {
    pub fn validate(&self) -> Result<()> {
        self.subset.validate().map_err(|e| e.context("subset"))?;
        if !(self.u_threshold > 0.0) {
            return Err(Error::invalid("u_threshold", "must be > 0"));
        }
        if self.n_initial < 2 {
            return Err(Error::invalid("n_initial", "must be >= 2"));
        }
        if self.n_initial > self.subset.n_per_subset {
            return Err(Error::invalid(
                "n_initial",
                "must not exceed subset.n_per_subset",
            ));
        }
        if !(self.retrain.refit_growth >= 0.0) {
            return Err(Error::invalid("retrain.refit_growth", "must be >= 0"));
        }
        if let Strategy::MlpLf { mlp } = &self.strategy {
            mlp.validate().map_err(|e| e.context("strategy.mlp"))?;
        }
        self.gp.validate().map_err(|e| e.context("gp"))
    }
}

/// How a ledger row's output was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    /// HF evaluation seeding a correction GP.
    Doe,
    /// HF evaluation chosen by the learning function.
    Hf,
    Surrogate,
    /// Chain seed or unmoved chain state; no evaluation.
    Carried,
}

/// One sample of the coupled run. For rejected candidates `output` is the
/// repeated chain value while `source` and `u_value` describe the candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub subset: usize,
    pub sample_index: usize,
    pub source: SampleSource,
    pub u_value: Option<f64>,
    pub output: f64,
    pub threshold_estimate: f64,
    pub cumulative_hf_calls: u64,
    pub simulated_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLedger {
    pub records: Vec<LedgerRecord>,
    pub hf_calls: u64,
    pub lf_calls: u64,
    /// HF calls spent training a data-driven LF before the first level.
    pub lf_training_hf_calls: u64,
    pub hf_cost_seconds: f64,
    pub lf_cost_seconds: f64,
}

impl CallLedger {
    /// (global sample index, cumulative HF calls) for every sample.
    pub fn cumulative_hf_curve(&self) -> Vec<(usize, u64)> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.cumulative_hf_calls))
            .collect()
    }

    /// HF calls made up to each within-subset sample index, summed over
    /// subsets. LF training calls are excluded.
    pub fn hf_calls_by_sample_index(&self) -> Vec<u64> {
        hf_calls_by_sample_index(&self.records)
    }
}

/// See [`CallLedger::hf_calls_by_sample_index`]; every `doe` or `hf` row is one HF call.
pub fn hf_calls_by_sample_index(records: &[LedgerRecord]) -> Vec<u64> {
    let len = records
        .iter()
        .map(|r| r.sample_index + 1)
        .max()
        .unwrap_or(0);
    let mut per_index = vec![0u64; len];
    for r in records {
        if matches!(r.source, SampleSource::Doe | SampleSource::Hf) {
            per_index[r.sample_index] += 1;
        }
    }
    let mut total = 0;
    for v in &mut per_index {
        total += *v;
        *v = total;
    }
    per_index
}

/// Simulated compute time; surrogate training overhead is not included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub hf_calls: u64,
    pub lf_calls: u64,
    pub hf_seconds: f64,
    pub lf_seconds: f64,
    pub total_seconds: f64,
}

impl BudgetSummary {
    pub fn from_counts(hf_calls: u64, lf_calls: u64, hf_cost: f64, lf_cost: f64) -> Self {
        let hf_seconds = hf_calls as f64 * hf_cost;
        let lf_seconds = lf_calls as f64 * lf_cost;
        Self {
            hf_calls,
            lf_calls,
            hf_seconds,
            lf_seconds,
            total_seconds: hf_seconds + lf_seconds,
        }
    }
}

pub fn budget_report(ledger: &CallLedger) -> BudgetSummary {
    BudgetSummary::from_counts(
        ledger.hf_calls,
        ledger.lf_calls,
        ledger.hf_cost_seconds,
        ledger.lf_cost_seconds,
    )
}

/// Aligned text table comparing labelled budgets.
pub fn budget_table(rows: &[(String, BudgetSummary)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>9}  {:>14}  {:>14}  {:>14}\n",
        "strategy", "HF calls", "LF calls", "HF time [s]", "LF time [s]", "total [s]"
    );
    for (name, b) in rows {
        out.push_str(&format!(
            "{:<width$}  {:>9}  {:>9}  {:>14.1}  {:>14.1}  {:>14.1}\n",
            name, b.hf_calls, b.lf_calls, b.hf_seconds, b.lf_seconds, b.total_seconds
        ));
    }
    out
}

/// Level-dependent learning function: |mean − f_i|/σ, or |mean|/σ on the final level.
pub fn subset_u(mean: f64, std: f64, level_threshold: f64, is_final: bool) -> f64 {
    shifted_u(mean, if is_final { 0.0 } else { level_threshold }, std)
}

/// (1 − p0)-quantile of the outputs so far, or `fallback` for fewer than two.
pub fn stochastic_threshold(outputs: &[f64], p0: f64, fallback: f64) -> f64 {
    if outputs.len() < 2 {
        fallback
    } else {
        empirical_quantile(outputs, 1.0 - p0)
    }
}

#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub estimate: FailureEstimate,
    pub ledger: CallLedger,
}

enum LowFidelity<'a> {
    Zero,
    Gp(GpModel),
    Mlp(MlpModel),
    Physics(&'a Evaluator),
}

impl LowFidelity<'_> {
    fn value(&self, x: &[f64], u: &[f64], buf: &mut Vec<f64>) -> Result<Option<f64>> {
        Ok(match self {
            LowFidelity::Zero => None,
            LowFidelity::Gp(gp) => Some(gp.predict_with(u, buf).mean),
            LowFidelity::Mlp(m) => Some(m.predict(u)),
            LowFidelity::Physics(e) => Some(e.evaluate(x)?),
        })
    }
}

/// The correction GP and its training-set bookkeeping.
struct Correction<'a> {
    gp: Option<GpModel>,
    pending_u: Vec<Vec<f64>>,
    pending_y: Vec<f64>,
    /// Points still to collect before the GP is (re)started.
    collecting: usize,
    last_refit: usize,
    options: &'a FitOptions,
    policy: &'a RetrainPolicy,
}

impl Correction<'_> {
    fn restart(&mut self, n: usize) {
        self.gp = None;
        self.pending_u.clear();
        self.pending_y.clear();
        self.collecting = n;
    }

    fn collect(&mut self, u: Vec<f64>, target: f64) -> Result<()> {
        self.pending_u.push(u);
        self.pending_y.push(target);
        self.collecting -= 1;
        if self.collecting == 0 {
            let gp = GpModel::fit(&self.pending_u, &self.pending_y, self.options.clone())?;
            self.last_refit = gp.len();
            self.gp = Some(gp);
        }
        Ok(())
    }

    fn learn(&mut self, u: &[f64], target: f64) -> Result<()> {
        let gp = self.gp.as_mut().expect("learning requires a fitted GP");
        let n = gp.len() + 1;
        let refit = n <= self.policy.full_refit_until
            || n as f64 >= self.last_refit as f64 * (1.0 + self.policy.refit_growth);
        gp.add_point(u, target, refit)?;
        if refit {
            self.last_refit = n;
        }
        Ok(())
    }
}

/// Runs the coupled driver. `lf` is required by [`Strategy::PhysicsLf`] and
/// ignored otherwise.
pub fn run_coupled(
    hf: &Evaluator,
    lf: Option<&Evaluator>,
    space: &ParameterSpace,
    config: &CoupledConfig,
) -> Result<CoupledRun> {
    config.validate()?;
    let sus = &config.subset;
    let n = sus.n_per_subset;
    let hf_start = hf.calls();
    let hf_used = || hf.calls() - hf_start;
    let mut lf_calls = 0u64;
    let lf_cost = match (&config.strategy, lf) {
        (Strategy::PhysicsLf, Some(e)) => e.cost_seconds(),
        (Strategy::PhysicsLf, None) => {
            return Err(Error::invalid(
                "strategy",
                "physics_lf needs a low-fidelity evaluator",
            ))
        }
        _ => 0.0,
    };
    let clock = |hf_calls: u64, lf_calls: u64| {
        hf_calls as f64 * hf.cost_seconds() + lf_calls as f64 * lf_cost
    };

    let mut rng = ChaCha8Rng::seed_from_u64(sus.seed);
    let low = match &config.strategy {
        Strategy::GpOnly => LowFidelity::Zero,
        Strategy::PhysicsLf => LowFidelity::Physics(lf.expect("checked above")),
        data_driven => {
            debug_assert!(data_driven.is_data_driven());
            // Separate stream so level 1 draws match plain subset simulation.
            let mut design_rng = ChaCha8Rng::seed_from_u64(sus.seed);
            design_rng.set_stream(1);
            let design = space.latin_hypercube(config.n_initial, &mut design_rng);
            let mut us = Vec::with_capacity(design.len());
            let mut ys = Vec::with_capacity(design.len());
            for (i, x) in design.iter().enumerate() {
                ys.push(
                    hf.evaluate(x)
                        .map_err(|e| e.context(format!("LF training point {i}")))?,
                );
                us.push(space.to_standard_normal(x));
            }
            match data_driven {
                Strategy::GpLf => LowFidelity::Gp(
                    GpModel::fit(&us, &ys, config.gp.clone())
                        .map_err(|e| e.context("LF GP fit"))?,
                ),
                Strategy::MlpLf { mlp } => LowFidelity::Mlp(
                    MlpModel::train(&us, &ys, mlp).map_err(|e| e.context("LF network training"))?,
                ),
                _ => unreachable!(),
            }
        }
    };
    let lf_training_hf_calls = hf_used();

    let mut correction = Correction {
        gp: None,
        pending_u: Vec::new(),
        pending_y: Vec::new(),
        collecting: 0,
        last_refit: 0,
        options: &config.gp,
        policy: &config.retrain,
    };
    correction.restart(config.n_initial);

    let cap = sus.level_cap();
    let mut records: Vec<LedgerRecord> = Vec::with_capacity(n * cap.min(8));
    let mut summaries: Vec<SubsetSummary> = Vec::new();
    let mut corrected = Vec::new();
    let mut buf = Vec::new();
    let mut lf_buf = Vec::new();
    let mut running = RunningQuantile::new(1.0 - sus.p0);

    // Previous level's threshold; −∞ on level 1 so every output is accepted.
    let mut previous = f64::NEG_INFINITY;
    let mut fallback = f64::NEG_INFINITY;
    let mut design_min = f64::INFINITY;
    let mut seeds: Vec<State> = Vec::new();
    let mut p_f = 1.0;
    let mut degenerate = false;
    let mut converged = true;
    let mut level = 1;
    loop {
        let level_hf_start = hf_used();
        let is_final = level == cap;
        running.clear();
        if level > 1 && config.fresh_gp_per_subset {
            correction.restart(config.n_initial);
        }
        let lengths = if level == 1 {
            vec![1; n]
        } else {
            chain_lengths(n, seeds.len())
        };
        let mut chains: Vec<Vec<usize>> = vec![Vec::new(); lengths.len()];
        let mut current = std::mem::take(&mut seeds);
        let mut samples: Vec<State> = Vec::with_capacity(n);
        let mut cand = Vec::new();
        let mut moves = 0usize;

        for (j, t) in round_robin(&lengths) {
            let index = samples.len();
            let ctx = |e: Error| e.context(format!("subset {level}, sample {index}"));
            let threshold_now = match running.value() {
                Some(v) if running.len() >= 2 => v,
                _ => fallback,
            }
            .min(0.0);

            // Candidate for this step, or None when the chain state is carried.
            let candidate = if level == 1 {
                let x = space.sample(&mut rng);
                let u = space.to_standard_normal(&x);
                Some((x, u))
            } else if t > 0
                && propose_standard(&current[j].u, sus.proposal_width, &mut rng, &mut cand)
            {
                Some((
                    physical(space, &current[j].x, &current[j].u, &cand),
                    cand.clone(),
                ))
            } else {
                None
            };

            let (source, u_value, evaluated) = match candidate {
                None => (SampleSource::Carried, None, None),
                Some((x, u)) if correction.collecting > 0 => {
                    let y = hf.evaluate(&x).map_err(ctx)?;
                    let y_lf = low.value(&x, &u, &mut lf_buf).map_err(ctx)?;
                    lf_calls += u64::from(y_lf.is_some());
                    correction
                        .collect(u.clone(), y - y_lf.unwrap_or(0.0))
                        .map_err(ctx)?;
                    if level == 1 {
                        design_min = design_min.min(y);
                        fallback = design_min;
                    }
                    (SampleSource::Doe, None, Some(State { x, u, y }))
                }
                Some((x, u)) => {
                    let y_lf = low.value(&x, &u, &mut lf_buf).map_err(ctx)?;
                    lf_calls += u64::from(y_lf.is_some());
                    let gp = correction.gp.as_ref().expect("fitted once collection ends");
                    let pred = gp.predict_with(&u, &mut buf);
                    let mean = y_lf.unwrap_or(0.0) + pred.mean;
                    let score = subset_u(mean, pred.std, threshold_now, is_final);
                    if score < config.u_threshold {
                        let y = hf.evaluate(&x).map_err(ctx)?;
                        correction.learn(&u, y - y_lf.unwrap_or(0.0)).map_err(ctx)?;
                        (SampleSource::Hf, Some(score), Some(State { x, u, y }))
                    } else {
                        (
                            SampleSource::Surrogate,
                            Some(score),
                            Some(State { x, u, y: mean }),
                        )
                    }
                }
            };

            let state = match evaluated {
                Some(s) if level == 1 => s,
                Some(s) if s.y > previous => {
                    moves += 1;
                    current[j] = s;
                    current[j].clone()
                }
                _ => current[j].clone(),
            };
            running.push(state.y);
            let hf_now = hf_used();
            records.push(LedgerRecord {
                subset: level,
                sample_index: index,
                source,
                u_value,
                output: state.y,
                threshold_estimate: threshold_now,
                cumulative_hf_calls: hf_now,
                simulated_time_s: clock(hf_now, lf_calls),
            });
            chains[j].push(index);
            samples.push(state);
        }

        let outputs: Vec<f64> = samples.iter().map(|s| s.y).collect();
        let close = close_level(&outputs, sus.p0, is_final);
        if sus.corrected_cov {
            corrected.push(correlated_cov(
                close.probability,
                &chain_indicators(&chains, &outputs, &close),
            ));
        }
        let mut summary = SubsetSummary {
            index: level,
            threshold: close.threshold,
            probability: close.probability,
            cov: cov_mcs(close.probability, n),
            samples: n,
            seeds: 0,
            acceptance_rate: (level > 1).then(|| moves as f64 / (n - lengths.len()).max(1) as f64),
            hf_calls: hf_used() - level_hf_start,
        };
        p_f *= close.probability;
        if close.probability == 0.0 {
            summaries.push(summary);
            degenerate = true;
            break;
        }
        if close.last {
            if sus.adaptive && level == cap {
                converged = empirical_quantile(&outputs, 1.0 - sus.p0) >= 0.0;
            }
            summaries.push(summary);
            break;
        }
        seeds = samples
            .into_iter()
            .filter(|s| s.y > close.threshold)
            .collect();
        summary.seeds = seeds.len();
        summaries.push(summary);
        previous = close.threshold;
        fallback = close.threshold;
        level += 1;
    }

    let hf_calls = hf_used();
    let deltas: Vec<f64> = summaries.iter().map(|s| s.cov).collect();
    let mut estimate = FailureEstimate::new(
        p_f,
        if degenerate {
            f64::INFINITY
        } else {
            cov_overall(&deltas)
        },
        hf_calls,
        (n * summaries.len()) as u64,
    );
    estimate.lf_calls = lf_calls;
    estimate.degenerate = degenerate;
    estimate.converged = converged && !degenerate;
    estimate.subsets = summaries;
    if sus.corrected_cov && !degenerate {
        estimate.cov_corrected = Some(cov_overall(&corrected));
    }
    Ok(CoupledRun {
        estimate,
        ledger: CallLedger {
            records,
            hf_calls,
            lf_calls,
            lf_training_hf_calls,
            hf_cost_seconds: hf.cost_seconds(),
            lf_cost_seconds: lf_cost,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Linear, PerturbedBorehole};
    use crate::normal;
    use crate::subset::{run_sus, select_threshold};
    use approx::assert_relative_eq;

    #[test]
    fn subset_u_examples() {
        assert_relative_eq!(
            subset_u(1.0 + 0.2, 0.4, 0.4, false),
            2.0,
            max_relative = 1e-15
        );
        assert_eq!(subset_u(0.0, 3.0, -5.0, true), 0.0);
        assert_eq!(subset_u(-1.25, 0.1, -1.25, false), 0.0);
        assert_eq!(subset_u(2.0, 0.0, 1.0, false), f64::INFINITY);
    }

    #[test]
    fn stochastic_threshold_examples() {
        assert_eq!(stochastic_threshold(&[-5.0], 0.1, -7.5), -7.5);
        assert_eq!(stochastic_threshold(&[-2.0; 9], 0.1, -7.5), -2.0);
        // on a full level the running estimate is the level's threshold
        let seq: Vec<f64> = (0..5000)
            .map(|i| -((i * 7919 % 5000) as f64) / 100.0)
            .collect();
        assert_eq!(
            stochastic_threshold(&seq, 0.1, 0.0),
            select_threshold(&seq, 0.1)
        );
    }

    #[test]
    fn budget_examples() {
        assert_eq!(
            BudgetSummary::from_counts(100, 0, 240.0, 11.0).total_seconds,
            24_000.0
        );
        let dnn = BudgetSummary::from_counts(300, 20_000, 240.0, 0.0);
        let physics = BudgetSummary::from_counts(300, 20_000, 240.0, 11.0);
        assert!(dnn.total_seconds < physics.total_seconds);
        let fewer = BudgetSummary::from_counts(261, 20_000, 240.0, 11.0);
        assert!(fewer.total_seconds > dnn.total_seconds);
        let table = budget_table(&[("dnn".into(), dnn), ("physics".into(), physics)]);
        assert_eq!(table.lines().count(), 3);
    }

    fn linear_config(strategy: Strategy, seed: u64) -> CoupledConfig {
        CoupledConfig {
            subset: SusConfig {
                n_per_subset: 5000,
                n_subsets: 3,
                seed,
                ..SusConfig::default()
            },
            strategy,
            ..CoupledConfig::default()
        }
    }

    #[test]
    fn gp_only_on_linear_limit_state() {
        let space = ParameterSpace::standard_normal(2).unwrap();
        let hf = Evaluator::new(Linear { beta0: 3.5 });
        let run = run_coupled(&hf, None, &space, &linear_config(Strategy::GpOnly, 1)).unwrap();
        let e = &run.estimate;
        let truth = normal::cdf(-3.5);
        assert!((e.p_f - truth).abs() <= 3.0 * e.cov * truth, "{e:?}");
        assert!(e.hf_calls < 500, "{}", e.hf_calls);
        assert_eq!(e.hf_calls, hf.calls());
        assert_eq!(run.ledger.records.len(), 15_000);
        for r in &run.ledger.records {
            match r.source {
                SampleSource::Hf => assert!(r.u_value.unwrap() < 2.0),
                SampleSource::Surrogate => assert!(r.u_value.unwrap() >= 2.0),
                _ => assert!(r.u_value.is_none()),
            }
        }
        let counts: Vec<u64> = run
            .ledger
            .records
            .iter()
            .map(|r| r.cumulative_hf_calls)
            .collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*counts.last().unwrap(), e.hf_calls);
        let t: Vec<f64> = e.subsets.iter().map(|s| s.threshold).collect();
        for r in run.ledger.records.iter().filter(|r| r.subset > 1) {
            assert!(r.output > t[r.subset - 2]);
        }
    }

    #[test]
    fn identical_lf_needs_no_further_hf_calls() {
        let space = crate::models::borehole_space();
        let model = PerturbedBorehole {
            distortion: 0.0,
            threshold: 200.0,
        };
        let hf = Evaluator::new(model);
        let lf = Evaluator::new(model);
        let mut cfg = linear_config(Strategy::PhysicsLf, 5);
        cfg.subset.n_per_subset = 2000;
        let run = run_coupled(&hf, Some(&lf), &space, &cfg).unwrap();
        assert_eq!(run.estimate.hf_calls, 12);
        let plain = run_sus(&space, &Evaluator::new(model), &cfg.subset).unwrap();
        assert_eq!(run.estimate.p_f, plain.estimate.p_f);
    }

    #[test]
    fn per_index_curve_sums_subsets() {
        let space = ParameterSpace::standard_normal(2).unwrap();
        let hf = Evaluator::new(Linear { beta0: 3.0 });
        let mut cfg = linear_config(Strategy::GpLf, 4);
        cfg.subset.n_per_subset = 500;
        let run = run_coupled(&hf, None, &space, &cfg).unwrap();
        let curve = run.ledger.hf_calls_by_sample_index();
        assert_eq!(curve.len(), 500);
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(
            curve[499],
            run.ledger.hf_calls - run.ledger.lf_training_hf_calls
        );
        assert!(curve[0] >= 1);
    }

    #[test]
    fn fresh_gp_restarts_each_level() {
        let space = ParameterSpace::standard_normal(2).unwrap();
        let hf = Evaluator::new(Linear { beta0: 3.0 });
        let mut cfg = linear_config(Strategy::GpOnly, 2);
        cfg.subset.n_per_subset = 1000;
        cfg.fresh_gp_per_subset = true;
        let run = run_coupled(&hf, None, &space, &cfg).unwrap();
        for level in 1..=3 {
            let doe = run
                .ledger
                .records
                .iter()
                .filter(|r| r.subset == level && r.source == SampleSource::Doe)
                .count();
            assert_eq!(doe, 12, "level {level}");
        }
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let space = ParameterSpace::standard_normal(2).unwrap();
        let hf = Evaluator::new(Linear { beta0: 3.0 });
        let mut cfg = linear_config(Strategy::GpLf, 3);
        cfg.subset.n_per_subset = 1000;
        let a = run_coupled(&hf, None, &space, &cfg).unwrap();
        let b = run_coupled(&hf, None, &space, &cfg).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.ledger, b.ledger);
    }

    #[test]
    fn physics_strategy_requires_an_lf() {
        let space = ParameterSpace::standard_normal(2).unwrap();
        let hf = Evaluator::new(Linear { beta0: 3.0 });
        let cfg = linear_config(Strategy::PhysicsLf, 0);
        assert!(run_coupled(&hf, None, &space, &cfg).is_err());
        assert_eq!(hf.calls(), 0);
    }
}
