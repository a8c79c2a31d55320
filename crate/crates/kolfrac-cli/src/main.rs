//! Thin command-line front end over the `kolfrac` scenario runner.
//!
//! Exit codes: 0 all checks pass, 1 any check failed or errored, 2 config or
//! usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kolfrac::scenario::{
    self, convergence_sweep, parse_config, presets, run_scenario, sweep_to_csv, OutputSpec,
    SweepAxis,
};

#[derive(Parser)]
#[command(name = "kolfrac", version, about = "Nonlocal Kolmogorov operator checks")]
struct Cli {
    /// Size of the worker pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (check, s, point) cell of a scenario config.
    Run {
        /// TOML scenario file.
        config: PathBuf,
        /// Report path (overrides the config's `output.path`).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report format: csv or json.
        #[arg(long)]
        format: Option<String>,
        /// Monte Carlo seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Include per-row wall times (makes reports non-reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Convergence sweep along one quadrature axis or along s.
    Sweep {
        /// TOML scenario file.
        config: PathBuf,
        /// Axis: hermite_order, tau_panels or s.
        #[arg(long)]
        axis: String,
        /// Strictly increasing axis values, comma separated.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Output path for the sweep table (stdout if omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the built-in operator presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Presets => {
            for (name, desc) in presets() {
                println!("{name:12} {desc}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            output,
            format,
            seed,
            timings,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
            let mut cfg = parse_config(&text).map_err(|errs| {
                errs.iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
            if let Some(seed) = seed {
                cfg.quadrature.mc_seed = seed;
            }
            if let Some(path) = output {
                let format = format
                    .or_else(|| cfg.output.as_ref().map(|o| o.format.clone()))
                    .unwrap_or_else(|| "csv".into());
                cfg.output = Some(OutputSpec {
                    path: path.display().to_string(),
                    format,
                });
            } else if let (Some(f), Some(out)) = (format, cfg.output.as_mut()) {
                out.format = f;
            }

            let report = run_scenario(&cfg).map_err(|e| e.to_string())?;
            if let Some(out) = &cfg.output {
                scenario::write_report(&report, out, timings).map_err(|e| e.to_string())?;
                eprintln!(
                    "{} rows written to {} ({} format)",
                    report.rows.len(),
                    out.path,
                    out.format
                );
            } else {
                print!("{}", scenario::to_csv(&report, timings));
            }
            let failed = report
                .rows
                .iter()
                .filter(|r| r.verdict != "pass")
                .count();
            if failed > 0 {
                eprintln!("{failed} of {} cells failed", report.rows.len());
                Ok(ExitCode::FAILURE)
            } else {
                eprintln!("all {} cells passed", report.rows.len());
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
            output,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
            let cfg = parse_config(&text).map_err(|errs| {
                errs.iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
            let axis: SweepAxis = axis.parse().map_err(|e: kolfrac::Error| e.to_string())?;
            let rows = convergence_sweep(&cfg, axis, &values).map_err(|e| e.to_string())?;
            let body = sweep_to_csv(&rows);
            match output {
                Some(path) => std::fs::write(&path, body)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => print!("{body}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
