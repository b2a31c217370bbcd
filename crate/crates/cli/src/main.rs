use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use rarefail_cli::config::preset_names;
use rarefail_cli::{execute, report, run, write_outputs, RunConfig};

#[derive(Parser)]
#[command(name = "rarefail", version, about = "Rare-event failure probability estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a bundled preset.
    ///
    /// Exit status: 0 converged, 2 finished without convergence, 1 error.
    Run {
        /// Path to a TOML/JSON config, or a preset name.
        config: String,
        /// Override the run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the runs found in a directory.
    Report {
        dir: PathBuf,
        /// Also write cumulative HF-call curves to this CSV file.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// List bundled presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if seed.is_some() {
                cfg.seed = seed;
            }
            if out.is_some() {
                cfg.output = out;
            }
            let dir = run::default_output_dir(&cfg);
            let outcome = execute(cfg)?;
            write_outputs(&outcome, &dir)?;
            print!("{}", run::summary(&outcome.file));
            println!("\nwrote {}", dir.display());
            Ok(outcome.exit_code() as u8)
        }
        Command::Report { dir, curves } => {
            let (runs, warnings) = report::collect(&dir)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report::table(&runs));
            if let Some(path) = curves {
                let n = report::write_curves(&runs, &path)?;
                println!("wrote {n} curve(s) to {}", path.display());
            }
            Ok(0)
        }
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(0)
        }
    }
}
