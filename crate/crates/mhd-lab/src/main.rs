//! Command-line front end: simulate | linear | inequalities | sweep | report.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical-validity abort
//! (leakage/NaN/CFL/blow-up), 4 I/O error. Thread count is controlled only
//! by the MHD_LAB_THREADS environment variable.

use clap::{Args, Parser, Subcommand};
use mhd_lab::config::{parse_config_file, Mode, RunConfig};
use mhd_lab::error::Error;
use mhd_lab::harness;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mhd-lab",
    about = "Pseudo-spectral laboratory for 2D viscous non-resistive MHD near a rotational magnetic equilibrium",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Configuration file (key = value format); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir from the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full perturbation system and record diagnostics.
    Simulate(RunArgs),
    /// Integrate the linearized system (nonlinear terms dropped).
    Linear(RunArgs),
    /// Run the inequality ensemble surveys.
    Inequalities(RunArgs),
    /// Run independent simulations over the configured amplitude list.
    Sweep(RunArgs),
    /// Summarize run records into tables and long-form series.
    Report {
        /// record.json paths to summarize.
        records: Vec<PathBuf>,
        /// Output directory for summary.csv and series_long.csv.
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

fn load_config(args: &RunArgs, mode: Mode) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => RunConfig::default(),
    };
    cfg.mode = mode;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn execute(args: &RunArgs, mode: Mode) -> Result<Option<String>, Error> {
    let cfg = load_config(args, mode)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    let record = harness::run(&cfg, &out_dir, args.quiet)?;
    let abort = record.abort.as_ref().map(|a| a.to_string());
    harness::write_record(&out_dir, &record)?;
    if !args.quiet {
        eprintln!(
            "mhd-lab: record written to {}",
            out_dir.join("record.json").display()
        );
    }
    Ok(abort)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MHD_LAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => execute(a, Mode::Simulate),
        Command::Linear(a) => execute(a, Mode::Linear),
        Command::Inequalities(a) => execute(a, Mode::Inequalities),
        Command::Sweep(a) => execute(a, Mode::Sweep),
        Command::Report { records, out, quiet } => match harness::report(records, out) {
            Ok(summary) => {
                if !quiet {
                    for skip in &summary.skipped {
                        eprintln!("mhd-lab: skipped {skip}");
                    }
                    eprintln!(
                        "mhd-lab: {} record(s) summarized into {}",
                        summary.rows.len(),
                        out.display()
                    );
                }
                Ok(None)
            }
            Err(e) => Err(e),
        },
    };

    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(abort)) => {
            eprintln!("mhd-lab: numerical validity lost: {abort}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("mhd-lab: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
