//! Comparison tables over finished run directories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rarefail_core::{hf_calls_by_sample_index, LedgerRecord};

use crate::run::{EstimateFile, ESTIMATE_FILE, LEDGER_FILE};

pub struct RunEntry {
    pub label: String,
    pub dir: PathBuf,
    pub file: EstimateFile,
}

/// Reads `dir/estimate.json` and `dir/*/estimate.json`. Unreadable files
/// produce warnings; no readable run at all is an error.
pub fn collect(dir: &Path) -> Result<(Vec<RunEntry>, Vec<String>)> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut candidates = vec![dir.to_path_buf()];
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    candidates.extend(subdirs);

    let mut runs = Vec::new();
    let mut warnings = Vec::new();
    for d in candidates {
        let path = d.join(ESTIMATE_FILE);
        if !path.exists() {
            continue;
        }
        let parsed = fs::read_to_string(&path)
            .map_err(anyhow::Error::from)
            .and_then(|t| serde_json::from_str::<EstimateFile>(&t).map_err(anyhow::Error::from));
        match parsed {
            Ok(file) => {
                let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let label = match &file.strategy {
                    Some(s) if !name.contains(s.as_str()) => format!("{name} ({s})"),
                    _ => name,
                };
                runs.push(RunEntry { label, dir: d, file });
            }
            Err(e) => warnings.push(format!("skipping {}: {e}", path.display())),
        }
    }
    if runs.is_empty() {
        bail!("no readable {ESTIMATE_FILE} under {}", dir.display());
    }
    Ok((runs, warnings))
}

/// One column per run; rows as in the usual results tables.
pub fn table(runs: &[RunEntry]) -> String {
    let rows: [(&str, Box<dyn Fn(&EstimateFile) -> String>); 5] = [
        ("P_f", Box::new(|f| format!("{:e}", f.estimate.p_f))),
        (
            "COV",
            Box::new(|f| if f.estimate.cov.is_finite() { format!("{}", f.estimate.cov) } else { "inf".into() }),
        ),
        ("beta", Box::new(|f| f.estimate.beta.map_or("N/A".into(), |b| format!("{b}")))),
        ("# HF calls", Box::new(|f| f.estimate.hf_calls.to_string())),
        ("# samples", Box::new(|f| f.estimate.total_samples.to_string())),
    ];
    let cells: Vec<Vec<String>> = runs.iter().map(|r| rows.iter().map(|(_, f)| f(&r.file)).collect()).collect();
    let head = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let widths: Vec<usize> = runs
        .iter()
        .zip(&cells)
        .map(|(r, c)| c.iter().map(String::len).chain([r.label.len()]).max().unwrap_or(0))
        .collect();

    let mut out = format!("{:<head$}", "");
    for (r, w) in runs.iter().zip(&widths) {
        out.push_str(&format!("  {:>w$}", r.label));
    }
    out.push('\n');
    for (i, (name, _)) in rows.iter().enumerate() {
        out.push_str(&format!("{name:<head$}"));
        for (c, w) in cells.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", c[i]));
        }
        out.push('\n');
    }
    out
}

/// Cumulative HF calls against the within-subset sample index, one column
/// per coupled run. Runs without a ledger are left out.
pub fn write_curves(runs: &[RunEntry], path: &Path) -> Result<usize> {
    let mut curves = Vec::new();
    for r in runs {
        let ledger = r.dir.join(LEDGER_FILE);
        if !ledger.exists() {
            continue;
        }
        let mut reader = csv::Reader::from_path(&ledger).with_context(|| format!("reading {}", ledger.display()))?;
        let records = reader
            .deserialize::<LedgerRecord>()
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("parsing {}", ledger.display()))?;
        curves.push((r.label.clone(), hf_calls_by_sample_index(&records)));
    }
    if curves.is_empty() {
        bail!("no {LEDGER_FILE} found; curves need coupled runs");
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["sample_index".to_string()];
    header.extend(curves.iter().map(|(l, _)| l.clone()));
    w.write_record(&header)?;
    let len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![i.to_string()];
        // shorter runs keep their final count
        row.extend(curves.iter().map(|(_, c)| c.get(i).or(c.last()).copied().unwrap_or(0).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(curves.len())
}
