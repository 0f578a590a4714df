//! `fedval`: command-line driver for federated contribution-assessment
//! experiments.
//!
//! - `run` simulates federated training over one or more seeds (or a whole
//!   grid of configs) and scores every client with the enabled methods;
//! - `assess` re-scores persisted round logs offline, without retraining;
//! - `report` pretty-prints a run's report directory;
//! - `oracle` exposes the brute-force reference computations the test suite
//!   compares the library against;
//! - `dump-data` writes the degraded client datasets to one binary file.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
//! 4 I/O error or corrupt persisted data.

use clap::{Parser, Subcommand};

use fedval_core::Error;

mod assess;
mod inspect;
mod oracle_cmd;
mod run;
mod scoring;

#[derive(Parser)]
#[command(
    name = "fedval",
    version,
    about = "Federated-learning contribution assessment at desk scale",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run experiments: data generation, federated rounds, and scoring.
    Run(run::RunArgs),
    /// Re-score a persisted run directory offline (no retraining).
    Assess(assess::AssessArgs),
    /// Pretty-print report.json and scores.csv from a run directory.
    Report(inspect::ReportArgs),
    /// Brute-force reference computations for golden comparisons.
    Oracle(oracle_cmd::OracleArgs),
    /// Generate and serialize the per-client datasets without training.
    DumpData(inspect::DumpDataArgs),
}

/// Maps error classes onto the documented exit codes.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::CorruptLog(_) => 4,
        _ => 3,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => run::cmd_run(args),
        Cmd::Assess(args) => assess::cmd_assess(args),
        Cmd::Report(args) => inspect::cmd_report(args),
        Cmd::Oracle(args) => oracle_cmd::cmd_oracle(args),
        Cmd::DumpData(args) => inspect::cmd_dump_data(args),
    };
    if let Err(e) = result {
        eprintln!("fedval: {e}");
        std::process::exit(exit_code(&e));
    }
}
