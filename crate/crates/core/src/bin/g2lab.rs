//! g2lab: run verification suites and emit machine-readable reports.

use clap::{Args, Parser, Subcommand};
use g2lab_core::config::{load_file, FlagOverrides, OutputFormat, RunConfig};
use g2lab_core::report::{write_atomic, Report};
use g2lab_core::suites::run_suites;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "g2lab", version, about = "Numerical laboratory for G2 moduli geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites and write a report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated suites: kernel, g2, flat7, full35, t3k3, period, all.
    #[arg(long)]
    suite: Option<String>,
    /// Model chart: flat7, full35, or t3k3.
    #[arg(long)]
    model: Option<String>,
    /// RNG seed (falls back to G2LAB_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the base finite-difference step.
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,
    /// Multiplicative scale applied to all check tolerances.
    #[arg(long)]
    tol: Option<f64>,
    /// JSON config file; command-line flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Verify(args) => verify(args),
    }
}

fn fail_config(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("g2lab: error: {msg}");
    ExitCode::from(2)
}

fn verify(args: VerifyArgs) -> ExitCode {
    let file_cfg = match &args.config {
        Some(path) => match load_file(path) {
            Ok(c) => Some(c),
            Err(e) => return fail_config(e),
        },
        None => None,
    };
    let env_seed = match std::env::var("G2LAB_SEED") {
        Ok(v) => match v.parse::<u64>() {
            Ok(s) => Some(s),
            Err(_) => return fail_config(format!("G2LAB_SEED is not a valid seed: '{v}'")),
        },
        Err(_) => None,
    };
    let flags = FlagOverrides {
        model: args.model,
        suite: args.suite,
        seed: args.seed,
        fd_step: args.fd_step,
        tol: args.tol,
        out: args.out,
        format: args.format,
    };
    let cfg = match RunConfig::resolve(file_cfg.as_ref(), &flags, env_seed) {
        Ok(c) => c,
        Err(e) => return fail_config(e),
    };
    // reject inconsistent chart configuration before running anything
    if let Err(e) = cfg.build_model() {
        return fail_config(e);
    }
    let records = match run_suites(&cfg) {
        Ok(r) => r,
        Err(e) => return fail_config(e),
    };
    let report = Report::new(
        cfg.suites.join(","),
        cfg.model.clone(),
        cfg.seed,
        cfg.echo(),
        records,
    );
    let body = match cfg.format {
        OutputFormat::Json => report.to_json_string(),
        OutputFormat::Csv => report.to_csv_string(),
    };
    match &cfg.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, &body) {
                return fail_config(format!("writing {}: {e}", path.display()));
            }
        }
        None => print!("{body}"),
    }
    eprintln!(
        "g2lab: {} checks, {} passed, {} failed, max residual {:.3e}",
        report.checks.len(),
        report.summary.passed,
        report.summary.failed,
        report.summary.max_residual_overall
    );
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
