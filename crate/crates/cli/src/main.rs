use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemotaxis_core::commands::{output_dir, run_sweep, run_to_dir, stability_report};
use chemotaxis_core::config::{parse_config, ConfigFile, RunFile};
use chemotaxis_core::io::verify;
use chemotaxis_core::simulation::SolverKind;
use chemotaxis_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "chemotaxis",
    version,
    about = "Chemotaxis reaction-diffusion laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thresholds, unstable band and dispersion relation.
    Stability {
        #[arg(long)]
        config: PathBuf,
        /// Write the dispersion relation here as TSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one simulation into a run directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solver: Option<SolverKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-hash the run directory against its manifest afterwards.
        #[arg(long)]
        verify: bool,
    },
    /// Fill a parameter-sweep table; reruns skip finished points.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a run directory against its manifest.
    Verify { dir: PathBuf },
}

fn run_file(config: &PathBuf) -> Result<RunFile> {
    match parse_config(config)? {
        ConfigFile::Sim(_, file) => Ok(*file),
        ConfigFile::Sweep(spec) => Ok(spec.base),
    }
}

fn check_dir(dir: &PathBuf) -> Result<bool> {
    let report = verify(dir)?;
    for path in &report.mismatched {
        eprintln!("mismatch: {path}");
    }
    println!(
        "verified {} files, {} mismatched",
        report.checked,
        report.mismatched.len()
    );
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Stability { config, out, json } => {
            let file = run_file(&config)?;
            let cfg = file.sim_config()?;
            let report = stability_report(&cfg.params, &cfg.grid.domain())?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
            } else {
                print!("{}", report.summary());
            }
            if let Some(out) = out {
                fs::write(&out, report.dispersion_tsv()).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
            }
        }
        Command::Simulate {
            config,
            solver,
            seed,
            out,
            verify,
        } => {
            let mut file = match parse_config(&config)? {
                ConfigFile::Sim(_, file) => *file,
                ConfigFile::Sweep(_) => {
                    return Err(Error::Validation(
                        "config has a [sweep] section; use `chemotaxis sweep`".into(),
                    ))
                }
            };
            if let Some(solver) = solver {
                file.scheme.solver = solver;
            }
            if let Some(seed) = seed {
                file.ic.seed = seed;
            }
            let dir = output_dir(&file, out.as_deref());
            file.output.dir = Some(dir.clone());
            let cfg = file.sim_config()?;
            let (outcome, manifest) = run_to_dir(&cfg, &file.to_toml(), &dir)?;
            println!("{}", outcome.classification);
            println!("t_final    {}", outcome.t_final);
            println!("deviation  {:.6e}", outcome.deviation);
            let (p, q) = outcome.dominant_mode;
            let met = if outcome.dominant_share >= file.monitors.energy_threshold {
                "at or above"
            } else {
                "below"
            };
            println!(
                "dominant   ({p},{q}) share {:.4} ({met} threshold {})",
                outcome.dominant_share, file.monitors.energy_threshold
            );
            println!("config     {}", manifest.config_hash);
            println!("output     {}", dir.display());
            if verify && !check_dir(&dir)? {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sweep { config, out } => {
            let spec = match parse_config(&config)? {
                ConfigFile::Sweep(spec) => spec,
                ConfigFile::Sim(..) => {
                    return Err(Error::Validation("config has no [sweep] section".into()))
                }
            };
            let summary = run_sweep(&spec, out.as_deref())?;
            println!(
                "{}: {} points, {} skipped, {} computed, {} failed",
                summary.table.display(),
                summary.total,
                summary.skipped,
                summary.computed,
                summary.failed
            );
        }
        Command::Verify { dir } => {
            if !check_dir(&dir)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
