//! Limit-state evaluators. Failure is `g(x) >= 0` everywhere.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::param_space::{MarginalDistribution, ParameterSpace};

/// A deterministic performance function g(x).
pub trait LimitState: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn name(&self) -> String;
}

/// Water flow through a borehole, F(x), with
/// x = (r_w, r, T_u, H_u, T_l, H_l, L, K_w).
pub fn borehole_flow(x: &[f64]) -> Result<f64> {
    flow(x, 0.0, true)
}

fn flow(x: &[f64], distortion: f64, lower_aquifer_term: bool) -> Result<f64> {
    if x.len() != 8 {
        return Err(Error::DimensionMismatch {
            expected: 8,
            got: x.len(),
        });
    }
    let (rw, r, tu, hu, tl, hl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
    if !(rw > 0.0 && r > 0.0) {
        return Err(Error::Model(format!(
            "borehole radii must be positive (r_w={rw}, r={r})"
        )));
    }
    let log_ratio = (r / rw).ln() * (1.0 + distortion);
    if !(log_ratio > 0.0) {
        return Err(Error::Model(format!(
            "ln(r/r_w) must be positive, got {log_ratio}"
        )));
    }
    if kw == 0.0 || tl == 0.0 {
        return Err(Error::Model(
            "zero K_w or T_l in borehole denominator".into(),
        ));
    }
    let mut denom = 1.0 + 2.0 * l * tu / (log_ratio * rw * rw * kw);
    if lower_aquifer_term {
        denom += tu / tl;
    }
    let f = 2.0 * std::f64::consts::PI * tu * (hu - hl) / (log_ratio * denom);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::Model(format!("non-finite borehole flow at {x:?}")))
    }
}

/// Borehole limit state g = F(x) − threshold; the standard threshold is 300.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Borehole {
    pub threshold: f64,
}

impl Default for Borehole {
    fn default() -> Self {
        Self { threshold: 300.0 }
    }
}

impl LimitState for Borehole {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(borehole_flow(x)? - self.threshold)
    }

    fn name(&self) -> String {
        format!("borehole(threshold={})", self.threshold)
    }
}

/// `borehole_g` with the standard threshold of 300.
pub fn borehole_g(x: &[f64]) -> Result<f64> {
    Borehole::default().evaluate(x)
}

/// Cheap, correlated stand-in for the borehole: ln(r/r_w) is scaled by
/// (1 + distortion) and the T_u/T_l term is dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedBorehole {
    pub distortion: f64,
    pub threshold: f64,
}

impl LimitState for PerturbedBorehole {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(flow(x, self.distortion, false)? - self.threshold)
    }

    fn name(&self) -> String {
        format!(
            "perturbed_borehole(distortion={}, threshold={})",
            self.distortion, self.threshold
        )
    }
}

/// g = (Σ x_d)/√D − β₀; with i.i.d. standard normal inputs P(g ≥ 0) = Φ(−β₀).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub beta0: f64,
}

impl LimitState for Linear {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.is_empty() {
            return Err(Error::invalid("x", "empty input"));
        }
        Ok(x.iter().sum::<f64>() / (x.len() as f64).sqrt() - self.beta0)
    }

    fn name(&self) -> String {
        format!("linear(beta0={})", self.beta0)
    }
}

pub fn linear_g(x: &[f64], beta0: f64) -> Result<f64> {
    Linear { beta0 }.evaluate(x)
}

/// g(x) = c for every input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl LimitState for Constant {
    fn evaluate(&self, _x: &[f64]) -> Result<f64> {
        Ok(self.0)
    }

    fn name(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// Adapts a closure into a limit state.
pub struct FnLimitState<F> {
    name: String,
    f: F,
}

impl<F> FnLimitState<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> LimitState for FnLimitState<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// External model behind a line protocol: each evaluation writes one
/// whitespace-separated sample line to the child's stdin and reads one scalar
/// line back from its stdout. The child is started lazily and kept alive.
pub struct Subprocess {
    command: Vec<String>,
    process: Mutex<Option<Process>>,
}

impl Subprocess {
    pub fn new(command: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::invalid("command", "must not be empty"));
        }
        Ok(Self {
            command,
            process: Mutex::new(None),
        })
    }

    fn spawn(&self) -> Result<Process> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Model(format!("failed to start `{}`: {e}", self.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Process {
            child,
            stdin,
            stdout,
        })
    }
}

impl LimitState for Subprocess {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let mut guard = self
            .process
            .lock()
            .map_err(|_| Error::Model("subprocess lock poisoned".into()))?;
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let proc = guard.as_mut().expect("spawned above");
        let line = x
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let io = |e: std::io::Error| Error::Model(format!("subprocess I/O: {e}"));
        writeln!(proc.stdin, "{line}").map_err(io)?;
        proc.stdin.flush().map_err(io)?;
        let mut reply = String::new();
        let read = proc.stdout.read_line(&mut reply).map_err(io)?;
        if read == 0 {
            *guard = None;
            return Err(Error::Model("subprocess closed its output".into()));
        }
        reply
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Model(format!("bad subprocess reply {:?}: {e}", reply.trim())))
    }

    fn name(&self) -> String {
        format!("subprocess({})", self.command.join(" "))
    }
}

impl Drop for Subprocess {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.process.lock() {
            if let Some(mut p) = guard.take() {
                drop(p.stdin);
                let _ = p.child.wait();
            }
        }
    }
}

/// A limit state with a call counter and nominal per-call cost.
pub struct Evaluator {
    model: Arc<dyn LimitState>,
    cost_seconds: f64,
    calls: AtomicU64,
}

impl Evaluator {
    pub fn new(model: impl LimitState + 'static) -> Self {
        Self::from_arc(Arc::new(model))
    }

    pub fn from_arc(model: Arc<dyn LimitState>) -> Self {
        Self {
            model,
            cost_seconds: 0.0,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_cost(mut self, cost_seconds: f64) -> Self {
        self.cost_seconds = cost_seconds;
        self
    }

    /// Evaluates g(x), counting the call. Non-finite outputs are errors.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let g = self.model.evaluate(x)?;
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::Model(format!("{} returned {g}", self.model.name())))
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn cost_seconds(&self) -> f64 {
        self.cost_seconds
    }

    pub fn name(&self) -> String {
        self.model.name()
    }

    /// A second evaluator sharing the same model but with its own counter.
    pub fn share(&self) -> Self {
        Self {
            model: Arc::clone(&self.model),
            cost_seconds: self.cost_seconds,
            calls: AtomicU64::new(0),
        }
    }
}

impl fmt::Debug for Evaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Evaluator")
            .field("model", &self.model.name())
            .field("cost_seconds", &self.cost_seconds)
            .field("calls", &self.calls())
            .finish()
    }
}

/// High- and low-fidelity evaluators over one parameter space.
#[derive(Debug)]
pub struct ModelPair {
    pub hf: Evaluator,
    pub lf: Evaluator,
    pub space: ParameterSpace,
}

/// The commonly used borehole input distributions.
pub fn borehole_space() -> ParameterSpace {
    use MarginalDistribution::*;
    ParameterSpace::new([
        (
            "r_w",
            Normal {
                mean: 0.10,
                std: 0.016_181_2,
            },
        ),
        (
            "r",
            Lognormal {
                log_mean: 7.71,
                log_std: 1.0056,
            },
        ),
        (
            "T_u",
            Uniform {
                lower: 63_070.0,
                upper: 115_600.0,
            },
        ),
        (
            "H_u",
            Uniform {
                lower: 990.0,
                upper: 1_110.0,
            },
        ),
        (
            "T_l",
            Uniform {
                lower: 63.1,
                upper: 116.0,
            },
        ),
        (
            "H_l",
            Uniform {
                lower: 700.0,
                upper: 820.0,
            },
        ),
        (
            "L",
            Uniform {
                lower: 1_120.0,
                upper: 1_680.0,
            },
        ),
        (
            "K_w",
            Uniform {
                lower: 9_855.0,
                upper: 12_045.0,
            },
        ),
    ])
    .expect("borehole space is valid")
}
