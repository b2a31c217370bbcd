//! Subset simulation with component-wise Metropolis-Hastings.
//!
//! Level 1 is crude Monte Carlo. Each later level grows Markov chains from the
//! samples of the previous level that exceed its threshold; the failure
//! probability is the product of the level probabilities.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{cov_mcs, cov_overall, FailureEstimate, SubsetSummary};
use crate::models::Evaluator;
use crate::param_space::{InputSample, ParameterSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SusConfig {
    pub n_per_subset: usize,
    pub p0: f64,
    /// Number of levels in fixed-count mode.
    pub n_subsets: usize,
    /// Keep adding levels until the threshold reaches 0 (up to `max_subsets`).
    pub adaptive: bool,
    pub max_subsets: usize,
    /// Proposal standard deviation in standard-normal units.
    pub proposal_width: f64,
    pub seed: u64,
    /// Also report the chain-correlation corrected COV.
    pub corrected_cov: bool,
}

impl Default for SusConfig {
    fn default() -> Self {
        Self {
            n_per_subset: 5000,
            p0: 0.1,
            n_subsets: 4,
            adaptive: false,
            max_subsets: 20,
            proposal_width: 1.0,
            seed: 0,
            corrected_cov: false,
        }
    }
}

impl SusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::invalid(
                "p0",
                format!("must be in (0, 1), got {}", self.p0),
            ));
        }
        if self.n_per_subset < 2 {
            return Err(Error::invalid("n_per_subset", "must be >= 2"));
        }
        if self.n_subsets == 0 || self.max_subsets == 0 {
            return Err(Error::invalid("n_subsets", "must be >= 1"));
        }
        if !(self.proposal_width >= 0.0 && self.proposal_width.is_finite()) {
            return Err(Error::invalid("proposal_width", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Nominal number of seeds per level, p0·N_n rounded to the nearest integer.
    pub fn seed_count(&self) -> usize {
        ((self.p0 * self.n_per_subset as f64).round() as usize).max(1)
    }

    /// Non-fatal configuration notes, e.g. p0·N_n not being an integer.
    pub fn warnings(&self) -> Vec<String> {
        let exact = self.p0 * self.n_per_subset as f64;
        if (exact - exact.round()).abs() > 1e-9 {
            vec![format!(
                "p0 * n_per_subset = {exact} is not an integer; using {} seeds per level",
                self.seed_count()
            )]
        } else {
            Vec::new()
        }
    }

    pub(crate) fn level_cap(&self) -> usize {
        if self.adaptive {
            self.max_subsets
        } else {
            self.n_subsets
        }
    }
}

/// Empirical q-quantile with linear interpolation between order statistics
/// at position (n − 1)·q.
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    interpolate(sorted.len(), q, |k| sorted[k])
}

fn interpolate(n: usize, q: f64, at: impl Fn(usize) -> f64) -> f64 {
    let pos = (n - 1) as f64 * q;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    let lo = at(k);
    if k + 1 < n {
        lo + frac * (at(k + 1) - lo)
    } else {
        lo
    }
}

/// Intermediate threshold: the (1 − p0) empirical quantile, capped at 0.
pub fn select_threshold(outputs: &[f64], p0: f64) -> f64 {
    empirical_quantile(outputs, 1.0 - p0).min(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming version of [`empirical_quantile`] for a fixed q, O(log n) per
/// insertion. Agrees bitwise with the batch computation on the same data.
#[derive(Debug, Clone)]
pub struct RunningQuantile {
    q: f64,
    lower: BinaryHeap<Key>,
    upper: BinaryHeap<Reverse<Key>>,
}

impl RunningQuantile {
    pub fn new(q: f64) -> Self {
        Self {
            q,
            lower: BinaryHeap::new(),
            upper: BinaryHeap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.lower.clear();
        self.upper.clear();
    }

    pub fn push(&mut self, v: f64) {
        match self.lower.peek() {
            Some(&Key(top)) if v < top => self.lower.push(Key(v)),
            _ => self.upper.push(Reverse(Key(v))),
        }
        // lower holds the order statistics 0..=k
        let n = self.len();
        let keep = ((n - 1) as f64 * self.q).floor() as usize + 1;
        while self.lower.len() > keep {
            let moved = self.lower.pop().expect("non-empty");
            self.upper.push(Reverse(moved));
        }
        while self.lower.len() < keep {
            let Reverse(moved) = self.upper.pop().expect("non-empty");
            self.lower.push(moved);
        }
    }

    pub fn value(&self) -> Option<f64> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let lo = self.lower.peek().map(|k| k.0);
        let hi = self.upper.peek().map(|k| k.0 .0);
        Some(interpolate(n, self.q, |i| {
            if i + 1 == self.lower.len() {
                lo.expect("k-th order statistic")
            } else {
                hi.expect("(k+1)-th order statistic")
            }
        }))
    }
}

/// Component-wise proposal in standard-normal space. Writes the candidate
/// into `out` and returns whether any coordinate moved. A ξ and an acceptance
/// draw are consumed per coordinate regardless of the outcome.
pub fn propose_standard<R: Rng + ?Sized>(
    u: &[f64],
    width: f64,
    rng: &mut R,
    out: &mut Vec<f64>,
) -> bool {
    out.clear();
    let mut moved = false;
    for &ui in u {
        let xi: f64 = rng.sample(StandardNormal);
        let r: f64 = rng.random();
        let cand = ui + width * xi;
        let ratio = (0.5 * (ui * ui - cand * cand)).exp();
        if r < ratio && cand != ui {
            out.push(cand);
            moved = true;
        } else {
            out.push(ui);
        }
    }
    moved
}

/// One component-wise Metropolis-Hastings candidate from `current`. The
/// limit-state conditioning is left to the caller.
pub fn mh_step<R: Rng + ?Sized>(
    current: &InputSample,
    space: &ParameterSpace,
    rng: &mut R,
    proposal_width: f64,
) -> InputSample {
    let u = space.to_standard_normal(current);
    let mut cand = Vec::with_capacity(u.len());
    propose_standard(&u, proposal_width, rng, &mut cand);
    physical(space, current, &u, &cand)
}

/// Maps a candidate back, leaving unmoved coordinates bitwise unchanged.
pub(crate) fn physical(space: &ParameterSpace, x: &[f64], u: &[f64], cand: &[f64]) -> InputSample {
    InputSample(
        space
            .marginals()
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if cand[k] == u[k] {
                    x[k]
                } else {
                    m.from_standard_normal(cand[k])
                }
            })
            .collect(),
    )
}

/// A chain state: physical point, its standard-normal image, and its output.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct State {
    pub x: InputSample,
    pub u: Vec<f64>,
    pub y: f64,
}

/// Lengths of `chains` chains sharing `total` samples; remainders go to the first chains.
pub(crate) fn chain_lengths(total: usize, chains: usize) -> Vec<usize> {
    let base = total / chains;
    let extra = total % chains;
    (0..chains).map(|j| base + usize::from(j < extra)).collect()
}

/// Round-robin visiting order: (chain, step) pairs, step 0 being the seed.
pub(crate) fn round_robin(lengths: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let steps = lengths.iter().copied().max().unwrap_or(0);
    (0..steps).flat_map(move |t| {
        lengths
            .iter()
            .enumerate()
            .filter(move |(_, &len)| t < len)
            .map(move |(j, _)| (j, t))
    })
}

/// How a level closes: its threshold, conditional probability, and whether it is the last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LevelClose {
    pub threshold: f64,
    pub probability: f64,
    pub last: bool,
}

pub(crate) fn close_level(outputs: &[f64], p0: f64, force_last: bool) -> LevelClose {
    let n = outputs.len() as f64;
    let q = select_threshold(outputs, p0);
    if force_last || q >= 0.0 {
        let hits = outputs.iter().filter(|&&y| y >= 0.0).count();
        LevelClose {
            threshold: 0.0,
            probability: hits as f64 / n,
            last: true,
        }
    } else {
        let hits = outputs.iter().filter(|&&y| y > q).count();
        LevelClose {
            threshold: q,
            probability: hits as f64 / n,
            last: false,
        }
    }
}

/// Per-chain level indicators; `chains` lists each chain's sample indices.
pub(crate) fn chain_indicators(
    chains: &[Vec<usize>],
    outputs: &[f64],
    close: &LevelClose,
) -> Vec<Vec<bool>> {
    chains
        .iter()
        .map(|c| {
            c.iter()
                .map(|&i| {
                    if close.last {
                        outputs[i] >= 0.0
                    } else {
                        outputs[i] > close.threshold
                    }
                })
                .collect()
        })
        .collect()
}

/// Level COV inflated by the lag correlation of the level indicator along
/// each chain; `chains` holds every chain's indicator sequence.
pub fn correlated_cov(p: f64, chains: &[Vec<bool>]) -> f64 {
    let n: usize = chains.iter().map(Vec::len).sum();
    if p <= 0.0 || n == 0 {
        return f64::INFINITY;
    }
    let r0 = p * (1.0 - p);
    let mut gamma = 0.0;
    if r0 > 0.0 {
        let max_len = chains.iter().map(Vec::len).max().unwrap_or(0);
        let nc = chains.len() as f64;
        for k in 1..max_len {
            let mut sum = 0.0;
            let mut count = 0usize;
            for c in chains.iter().filter(|c| c.len() > k) {
                sum += c.windows(k + 1).filter(|w| w[0] && w[k]).count() as f64;
                count += c.len() - k;
            }
            if count == 0 {
                break;
            }
            let rho = (sum / count as f64 - p * p) / r0;
            gamma += 2.0 * (1.0 - k as f64 * nc / n as f64) * rho;
        }
    }
    ((1.0 - p) / (p * n as f64) * (1.0 + gamma).max(0.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SusTraceRow {
    pub subset: usize,
    pub sample_index: usize,
    pub output: f64,
    pub is_seed: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct SusRun {
    pub estimate: FailureEstimate,
    pub trace: Vec<SusTraceRow>,
}

pub fn run_sus(space: &ParameterSpace, hf: &Evaluator, config: &SusConfig) -> Result<SusRun> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let calls_at_start = hf.calls();
    let n = config.n_per_subset;
    let mut trace = Vec::with_capacity(n * config.level_cap().min(8));
    let mut summaries: Vec<SubsetSummary> = Vec::new();
    let mut corrected = Vec::new();

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let x = space.sample(&mut rng);
        let y = hf
            .evaluate(&x)
            .map_err(|e| e.context(format!("subset 1, sample {i}")))?;
        trace.push(SusTraceRow {
            subset: 1,
            sample_index: i,
            output: y,
            is_seed: false,
            accepted: true,
        });
        let u = space.to_standard_normal(&x);
        samples.push(State { x, u, y });
    }
    // Level-1 samples are independent: one chain per sample.
    let mut chains: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut acceptance = None;
    let mut calls_before_level = calls_at_start;

    let mut level = 1;
    let mut p_f = 1.0;
    let mut degenerate = false;
    let mut converged = true;
    loop {
        let outputs: Vec<f64> = samples.iter().map(|s| s.y).collect();
        let close = close_level(&outputs, config.p0, level == config.level_cap());
        let cov = cov_mcs(close.probability, n);
        if config.corrected_cov {
            corrected.push(correlated_cov(
                close.probability,
                &chain_indicators(&chains, &outputs, &close),
            ));
        }
        summaries.push(SubsetSummary {
            index: level,
            threshold: close.threshold,
            probability: close.probability,
            cov,
            samples: n,
            seeds: 0,
            acceptance_rate: acceptance,
            hf_calls: hf.calls() - calls_before_level,
        });
        p_f *= close.probability;
        if close.probability == 0.0 {
            degenerate = true;
            break;
        }
        if close.last {
            if config.adaptive {
                converged =
                    select_threshold(&outputs, config.p0) >= 0.0 || level < config.max_subsets;
            }
            break;
        }

        let seeds: Vec<State> = samples
            .iter()
            .filter(|s| s.y > close.threshold)
            .cloned()
            .collect();
        summaries.last_mut().expect("pushed above").seeds = seeds.len();
        level += 1;
        calls_before_level = hf.calls();
        let lengths = chain_lengths(n, seeds.len());
        let mut current = seeds;
        let mut next = Vec::with_capacity(n);
        chains = vec![Vec::new(); lengths.len()];
        let mut cand = Vec::new();
        let mut moves = 0usize;
        for (j, t) in round_robin(&lengths) {
            let index = next.len();
            let mut accepted = t == 0;
            if t > 0 && propose_standard(&current[j].u, config.proposal_width, &mut rng, &mut cand)
            {
                let x = physical(space, &current[j].x, &current[j].u, &cand);
                let y = hf
                    .evaluate(&x)
                    .map_err(|e| e.context(format!("subset {level}, sample {index}")))?;
                if y > close.threshold {
                    current[j] = State {
                        x,
                        u: cand.clone(),
                        y,
                    };
                    accepted = true;
                    moves += 1;
                }
            }
            trace.push(SusTraceRow {
                subset: level,
                sample_index: index,
                output: current[j].y,
                is_seed: t == 0,
                accepted,
            });
            chains[j].push(index);
            next.push(current[j].clone());
        }
        acceptance = Some(moves as f64 / (n - lengths.len()).max(1) as f64);
        samples = next;
    }

    let deltas: Vec<f64> = summaries.iter().map(|s| s.cov).collect();
    let cov = if degenerate {
        f64::INFINITY
    } else {
        cov_overall(&deltas)
    };
    let mut estimate = FailureEstimate::new(
        p_f,
        cov,
        hf.calls() - calls_at_start,
        (n * summaries.len()) as u64,
    );
    estimate.degenerate = degenerate;
    estimate.converged = converged && !degenerate;
    estimate.subsets = summaries;
    if config.corrected_cov && !degenerate {
        estimate.cov_corrected = Some(cov_overall(&corrected));
    }
    Ok(SusRun { estimate, trace })
}
