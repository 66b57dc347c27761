use std::path::PathBuf;
use std::process::ExitCode;

use abrsim_core::output::{format_tables, run_matrix, summary_rows, verify};
use abrsim_core::scenarios::describe;
use abrsim_core::{parse_config, SCENARIO_NAMES};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

/// Cell-level ATM ABR simulator with ERICA and VS/VD switches.
#[derive(Parser)]
#[command(name = "abrsim", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Print the built-in scenarios and exit.
    #[arg(long)]
    list_scenarios: bool,

    /// Recompute summary.csv of an output directory from its run CSVs.
    #[arg(long, value_name = "DIR")]
    verify: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every simulation described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Parallel simulations (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    if cli.list_scenarios {
        for name in SCENARIO_NAMES {
            println!("{name:20} {}", describe(name).unwrap_or_default());
        }
        return Ok(true);
    }
    if let Some(dir) = cli.verify {
        let report = verify(&dir).with_context(|| format!("verifying {}", dir.display()))?;
        for m in &report.mismatches {
            println!("MISMATCH {m}");
        }
        println!(
            "verified {} runs, {} values: {}",
            report.runs,
            report.values,
            if report.ok() { "ok" } else { "FAILED" }
        );
        return Ok(report.ok());
    }
    match cli.command {
        Some(Command::Run { config, out, workers }) => {
            let specs = parse_config(&config)?;
            let workers = match workers {
                Some(0) => bail!("--workers must be at least 1"),
                Some(n) => n,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            eprintln!("running {} simulations on {} workers", specs.len(), workers.min(specs.len()));
            let outcomes = run_matrix(&specs, &out, workers)?;
            print!("{}", format_tables(&summary_rows(&outcomes)));
            let mut ok = true;
            for o in &outcomes {
                if let Some(msg) = o.failure() {
                    ok = false;
                    eprintln!("FAILED {}/{}: {msg}", o.spec.scenario, o.spec.column);
                }
            }
            eprintln!("wrote {}", out.display());
            Ok(ok)
        }
        None => bail!("nothing to do; see --help"),
    }
}
