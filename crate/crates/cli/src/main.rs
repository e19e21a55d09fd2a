//! `mnar`: file-in, file-out front end to `mnar-core`.
//!
//! Exit codes: 0 on success, 2 when `verify` finds a check above tolerance,
//! 1 on any error (printed as `error[CODE]: message`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mnar_core::Error;

#[derive(Debug, Parser)]
#[command(name = "mnar", version, about = "Permutation MNAR model: identification, estimation and exact checks")]
pub struct Cli {
    /// Worker threads for parallel sections; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw an observed dataset (CSV) from a law.
    Simulate(SimulateArgs),
    /// Identified functionals of an observed law (CSV).
    Identify(IdentifyArgs),
    /// Estimate θ and ψ from a dataset (JSON).
    Estimate(EstimateArgs),
    /// Seeded Monte Carlo replications (CSV).
    Mc(McArgs),
    /// Exact expansion and remainder-decay checks (CSV).
    Verify(VerifyArgs),
    /// d-separation queries on an m-DAG or its SWIG.
    Dsep(DsepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Permutation-law or observed-law JSON; the reference law when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Observed-law or permutation-law JSON; the reference law when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Dataset CSV with header `r1,r2,y,x`.
    #[arg(long)]
    pub data: PathBuf,
    /// Estimator config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// plugin | plugin_binary | onestep_general | onestep_binary
    #[arg(long)]
    pub method: Option<String>,
    /// Cross-fitting folds; 1 fits nuisances on the full sample.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// known:<value> | estimate
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub pseudo_count: Option<f64>,
    #[arg(long)]
    pub clip_floor: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Permutation-law JSON; the reference law when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// known:<value> | estimate
    #[arg(long, default_value = "estimate")]
    pub rho: String,
    /// Bump fitted nuisances by `scale · n^{-1/4}`.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub pseudo_count: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Law P (observed-law or permutation-law JSON).
    #[arg(long, requires = "pbar", conflicts_with = "pairs")]
    pub config: Option<PathBuf>,
    /// Law P̄ on the same supports as P.
    #[arg(long)]
    pub pbar: Option<PathBuf>,
    /// Number of seeded pairs around the reference law, seeds `seed..seed+pairs`.
    #[arg(long)]
    pub pairs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance on identity residuals and influence-function means.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// ρ for the binary-outcome form: known:<value>, or `estimate` for ρ(P).
    #[arg(long, default_value = "estimate")]
    pub rho: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DsepArgs {
    /// Graph spec file.
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    pub config: Option<PathBuf>,
    /// missing-exposure | permutation
    #[arg(long)]
    pub builtin: Option<String>,
    /// Node split `NODE=LABEL`, repeatable; queries then run on the SWIG.
    #[arg(long)]
    pub split: Vec<String>,
    /// `A1 A2 ; B1 | Z1 Z2`, whitespace-separated names; repeatable.
    #[arg(long, required = true)]
    pub query: Vec<String>,
    /// Also print the (split) graph spec.
    #[arg(long)]
    pub show: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub enum Outcome {
    Ok,
    ToleranceFailure,
}

fn fail(code: &str, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error[{code}]: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            return fail("USAGE", e.to_string().trim_start_matches("error: ").trim_end());
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| commands::run(&cli.command))),
        None => commands::run(&cli.command),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceFailure) => ExitCode::from(2),
        Err(e) => fail(e.code(), e),
    }
}
