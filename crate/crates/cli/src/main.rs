//! `pcurve`: batch front end for p-convex prescribed-curvature graph solves
//! and the operator property suites.
//!
//! Exit codes: 0 success, 1 usage/config/hypothesis error, 2 solver
//! failure, 3 verification-suite failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{RadialArgs, Status, VerifyArgs};
use pcurve_core::Error;

#[derive(Parser)]
#[command(name = "pcurve", version, about = "Prescribed p-curvature graphs: solves, suites, references")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the Dirichlet problem described by a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving the solution CSV and report JSON.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run property suites on seeded cone samples.
    Verify {
        /// Suite name, or `all`.
        #[arg(long)]
        suite: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        near_boundary_fraction: f64,
        /// Targets for the growth suite.
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        c_values: Vec<f64>,
        /// JSON output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Radial reference solution on a ball by ODE shooting.
    Radial {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        r: f64,
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Number of equispaced profile samples in the CSV.
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// CSV file with columns `rho,u`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refinement study against the cap or radial reference solution.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        h_list: Vec<f64>,
        /// CSV output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate F, F̃ and the gradient at a spectrum.
    Eval {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        lambda: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: usize,
    },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PCURVE_THREADS") {
        let threads: usize = v.trim().parse().with_context(|| format!("PCURVE_THREADS={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Status> {
    init_threads()?;
    match cli.cmd {
        Cmd::Solve { config, out } => commands::solve(&config, &out),
        Cmd::Verify {
            suite,
            n,
            p,
            count,
            seed,
            near_boundary_fraction,
            c_values,
            out,
        } => commands::verify(&VerifyArgs {
            suite,
            n,
            p,
            count,
            seed,
            near_boundary_fraction,
            c_values,
            out,
        }),
        Cmd::Radial {
            n,
            p,
            r,
            f,
            tol,
            points,
            out,
        } => commands::radial(&RadialArgs {
            n,
            p,
            r,
            f,
            tol,
            points,
            out,
        }),
        Cmd::Converge { config, h_list, out } => commands::converge(&config, &h_list, out.as_deref()),
        Cmd::Eval { lambda, n, p } => commands::eval(&lambda, n, p),
    }
}

fn is_solver_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(
                Error::Stall { .. }
                    | Error::LineSearch { .. }
                    | Error::MaxNewton { .. }
                    | Error::LinearSolve { .. }
                    | Error::NotAdmissible { .. }
                    | Error::EigenFailure { .. }
                    | Error::ShootingBracket(_)
                    | Error::ConeExit { .. }
            )
        )
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::SuiteFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_solver_failure(&e) { 2 } else { 1 })
        }
    }
}
