//! Command-line front end for the transport pipeline: run one experiment,
//! run a battery of configs, or benchmark the structured solver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmot::harness::{bench_structured, run_battery, run_pipeline, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mmot", version, about = "Discrete multi-marginal optimal transport runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Output directory for artifacts.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the splitting-gap tolerance.
    #[arg(long)]
    tol_gap: Option<f64>,
    /// Override the mass tolerance.
    #[arg(long)]
    tol_mass: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured instance and run its verification stages.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every *.json config in a directory and aggregate a summary.
    Battery {
        config_dir: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Time the structured entropic solver across grid sizes.
    Bench {
        config: PathBuf,
        /// Comma-separated marginal sizes, e.g. 5,10,20.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> mmot::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(gap) = overrides.tol_gap {
        config.tolerances.gap = Some(gap);
    }
    if let Some(mass) = overrides.tol_mass {
        config.tolerances.mass = Some(mass);
    }
    Ok(config)
}

fn run_one(config_path: PathBuf, overrides: Overrides) -> ExitCode {
    let config = match load_config(&config_path, &overrides) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    let out_dir = overrides.out.join(&config.name);
    match run_pipeline(&config, &out_dir) {
        Ok(report) => {
            if let Some(solve) = &report.solve {
                println!(
                    "{}: objective {:.12e} ({} solver, {} iterations)",
                    report.name, solve.objective, report.solver, solve.iterations
                );
            }
            for (stage, verdict) in &report.verdicts {
                let expected = &report.expected[stage];
                let mark = if expected.split('|').any(|e| e == verdict) {
                    "ok"
                } else {
                    "MISMATCH"
                };
                println!("  {stage}: {verdict} (expected {expected}) {mark}");
            }
            println!("artifacts: {}", out_dir.display());
            if report.incomplete {
                eprintln!(
                    "incomplete: {}",
                    report.error.as_deref().unwrap_or("unknown stage failure")
                );
                ExitCode::from(2)
            } else if report.as_expected {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run_many(config_dir: PathBuf, out: PathBuf) -> ExitCode {
    match run_battery(&config_dir, &out) {
        Ok(summary) => {
            for row in &summary.rows {
                let status = if row.incomplete {
                    "ERROR"
                } else if row.as_expected {
                    "ok"
                } else {
                    "MISMATCH"
                };
                let verdicts: Vec<String> = row
                    .verdicts
                    .iter()
                    .map(|(stage, verdict)| format!("{stage}={verdict}"))
                    .collect();
                println!("{}: {} [{}]", row.name, status, verdicts.join(" "));
                if let Some(err) = &row.error {
                    println!("  {err}");
                }
            }
            println!(
                "{}/{} as expected; summary: {}",
                summary.rows.iter().filter(|r| r.as_expected).count(),
                summary.rows.len(),
                out.join("summary.json").display()
            );
            if summary.rows.iter().any(|r| r.incomplete) {
                ExitCode::from(2)
            } else if summary.all_as_expected {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run_bench(config_path: PathBuf, sizes: Vec<usize>, out: PathBuf) -> ExitCode {
    let config = match ExperimentConfig::from_path(&config_path) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    let out_dir = out.join(&config.name);
    match bench_structured(&config, &sizes, &out_dir) {
        Ok(rows) => {
            for row in &rows {
                let dense = row
                    .dense_ms
                    .map(|ms| format!("{ms} ms"))
                    .unwrap_or_else(|| "skipped".into());
                println!(
                    "n={}: structured {} ms ({} sweeps, {} cost evals), dense {}",
                    row.n, row.structured_ms, row.sweeps, row.structured_cost_evals, dense
                );
                if let Some(d) = row.max_marginal_discrepancy {
                    println!("  max marginal discrepancy vs dense: {d:.3e}");
                }
            }
            println!("artifacts: {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, overrides } => run_one(config, overrides),
        Command::Battery { config_dir, out } => run_many(config_dir, out),
        Command::Bench { config, sizes, out } => run_bench(config, sizes, out),
    }
}
