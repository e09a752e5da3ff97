//! `dbm`: solve, scan and simulate the deep Boltzmann machine on the Nishimori line.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 a solver did not converge,
//! 3 a verification check failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Status;
use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "dbm", version, about = "Deep Boltzmann machine on the Nishimori line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; built-in defaults when absent
    #[arg(long, global = true, env = "DBM_CONFIG")]
    config: Option<PathBuf>,
    /// base seed for disorder and Monte Carlo streams
    #[arg(long, global = true, env = "DBM_SEED")]
    seed: Option<u64>,
    /// worker threads (0 = all cores)
    #[arg(long, global = true, env = "DBM_THREADS")]
    threads: Option<usize>,
    /// output directory
    #[arg(long, global = true, env = "DBM_OUT")]
    out: Option<PathBuf>,
    /// stopping tolerance for the fixed-point and pi-ascent solvers and for scans
    #[arg(long, global = true, env = "DBM_TOL")]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Solve the variational problem for the configured model
    Solve,
    /// Solve along a one-parameter grid and write a CSV
    PhaseScan,
    /// Maximize the critical spectral radius over form factors
    OptimizeAlpha,
    /// Disorder-averaged finite-N simulation
    Simulate,
    /// Exact enumeration at the configured sizes
    Enumerate,
    /// Run the invariant checks of every module
    Verify,
    /// Nishimori residuals of the quadrature rule
    QuadratureCheck,
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        out_dir: cli.out.clone(),
        tol: cli.tol,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global()?;

    let echo = cfg.to_toml()?;
    println!("# effective configuration");
    print!("{echo}");
    println!("# end of configuration");
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("effective_config.toml"), &echo)?;

    match cli.command {
        Command::Solve => commands::solve(&cfg),
        Command::PhaseScan => commands::phase_scan(&cfg),
        Command::OptimizeAlpha => commands::optimize_alpha(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Enumerate => commands::enumerate(&cfg),
        Command::Verify => commands::verify(&cfg),
        Command::QuadratureCheck => commands::quadrature_check(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(msg)) => {
            eprintln!("error: not converged: {msg}");
            ExitCode::from(2)
        }
        Ok(Status::ChecksFailed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let not_converged = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<dbm_core::Error>(), Some(dbm_core::Error::NotConverged { .. })));
            ExitCode::from(if not_converged { 2 } else { 1 })
        }
    }
}
