//! Executes a run configuration and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rarefail_core::{
    budget_report, run_akmcs, run_coupled, run_sus, BudgetSummary, CallLedger, FailureEstimate,
    AkmcsTraceRow, SusTraceRow,
};
use serde::{Deserialize, Serialize};

use crate::config::{Driver, RunConfig};

pub const ESTIMATE_FILE: &str = "estimate.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const LEDGER_FILE: &str = "ledger.csv";

/// Contents of `estimate.json`. `config` is the resolved configuration and
/// re-runs the experiment as is; the output location is not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub driver: Driver,
    pub model: String,
    #[serde(default)]
    pub strategy: Option<String>,
    pub seed: u64,
    #[serde(flatten)]
    pub estimate: FailureEstimate,
    #[serde(default)]
    pub budget: Option<BudgetSummary>,
    pub config: RunConfig,
}

pub enum Trace {
    Akmcs(Vec<AkmcsTraceRow>),
    Sus(Vec<SusTraceRow>),
    Coupled(CallLedger),
}

pub struct Outcome {
    pub file: EstimateFile,
    pub trace: Trace,
}

impl Outcome {
    pub fn estimate(&self) -> &FailureEstimate {
        &self.file.estimate
    }

    pub fn exit_code(&self) -> i32 {
        if self.file.estimate.converged {
            0
        } else {
            2
        }
    }
}

/// Resolves, validates and runs `config`. Validation happens before any
/// model is built or evaluated.
pub fn execute(config: RunConfig) -> Result<Outcome> {
    let config = config.resolved();
    config.validate()?;
    let space = config.space.clone().expect("validated");
    let hf = config.model.evaluator()?;
    let seed = config.seed.expect("resolved");
    let mut echo = config.clone();
    echo.output = None;
    let (estimate, strategy, budget, trace) = match config.driver {
        Driver::Akmcs => {
            let run = run_akmcs(&space, &hf, config.akmcs.as_ref().expect("resolved"))?;
            (run.estimate, None, None, Trace::Akmcs(run.trace))
        }
        Driver::Sus => {
            let run = run_sus(&space, &hf, config.sus.as_ref().expect("resolved"))?;
            (run.estimate, None, None, Trace::Sus(run.trace))
        }
        Driver::Coupled => {
            let block = config.coupled.as_ref().expect("resolved");
            let lf = config.lf_model.as_ref().map(|m| m.evaluator()).transpose()?;
            let run = run_coupled(&hf, lf.as_ref(), &space, block)?;
            let budget = budget_report(&run.ledger);
            (
                run.estimate,
                Some(block.strategy.name().to_string()),
                Some(budget),
                Trace::Coupled(run.ledger),
            )
        }
    };
    Ok(Outcome {
        file: EstimateFile {
            driver: config.driver,
            model: hf.name(),
            strategy,
            seed,
            estimate,
            budget,
            config: echo,
        },
        trace,
    })
}

/// Writes estimate JSON, trace or ledger CSV and summary into `dir`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json = serde_json::to_string_pretty(&outcome.file)?;
    fs::write(dir.join(ESTIMATE_FILE), json + "\n")?;
    match &outcome.trace {
        Trace::Akmcs(rows) => write_csv(&dir.join(TRACE_FILE), rows)?,
        Trace::Sus(rows) => write_csv(&dir.join(TRACE_FILE), rows)?,
        Trace::Coupled(ledger) => write_csv(&dir.join(LEDGER_FILE), &ledger.records)?,
    }
    fs::write(dir.join(SUMMARY_FILE), summary(&outcome.file))?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn default_output_dir(config: &RunConfig) -> PathBuf {
    config.output.clone().unwrap_or_else(|| PathBuf::from("rarefail-out"))
}

/// Human-readable run summary.
pub fn summary(file: &EstimateFile) -> String {
    let e = &file.estimate;
    let mut out = String::new();
    out.push_str(&format!("driver      {:?}\n", file.driver).to_lowercase());
    out.push_str(&format!("model       {}\n", file.model));
    if let Some(s) = &file.strategy {
        out.push_str(&format!("strategy    {s}\n"));
    }
    out.push_str(&format!("seed        {}\n", file.seed));
    out.push_str(&format!("P_f         {:e}\n", e.p_f));
    out.push_str(&format!("COV         {}\n", fmt_opt(Some(e.cov).filter(|c| c.is_finite()))));
    out.push_str(&format!("beta        {}\n", fmt_opt(e.beta)));
    out.push_str(&format!("HF calls    {}\n", e.hf_calls));
    out.push_str(&format!("samples     {}\n", e.total_samples));
    out.push_str(&format!("converged   {}\n", e.converged));
    if e.degenerate {
        out.push_str("degenerate  no failures observed; COV is infinite\n");
    }
    if !e.subsets.is_empty() {
        out.push_str("\nsubset  threshold        probability  COV      HF calls\n");
        for s in &e.subsets {
            out.push_str(&format!(
                "{:<6}  {:<15.6e}  {:<11.5}  {:<7}  {}\n",
                s.index,
                s.threshold,
                s.probability,
                fmt_opt(Some(s.cov).filter(|c| c.is_finite()).map(|c| (c * 1e4).round() / 1e4)),
                s.hf_calls
            ));
        }
    }
    if let Some(b) = &file.budget {
        out.push_str(&format!(
            "\nsimulated time  {:.1} s (HF {:.1} s, LF {:.1} s, {} LF calls)\n",
            b.total_seconds, b.hf_seconds, b.lf_seconds, b.lf_calls
        ));
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x}"))
}
