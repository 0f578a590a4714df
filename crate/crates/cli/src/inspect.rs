//! The `report` and `dump-data` subcommands.

use std::path::PathBuf;

use clap::Args;

use fedval_core::engine;
use fedval_core::error::Result;
use fedval_core::report;
use fedval_core::storage;

use crate::run::resolve_config;

#[derive(Args)]
pub struct ReportArgs {
    /// Run directory containing report.json and scores.csv.
    pub dir: PathBuf,
}

fn join_ranks(ranks: &[usize]) -> String {
    ranks
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cmd_report(args: ReportArgs) -> Result<()> {
    let rep = report::parse_report(&args.dir)?;
    println!(
        "run {} (setting {}, seed {}, format v{})",
        args.dir.display(),
        rep.setting,
        rep.seed,
        rep.format_version
    );
    println!("ground truth ranking: {}", join_ranks(&rep.ground_truth));
    for m in &rep.methods {
        println!();
        println!(
            "method {}  rho {:+.4}  rounds scored {}",
            m.method,
            m.rho,
            m.board.rounds.len()
        );
        println!("  client  total         rank");
        for i in 0..m.board.n_clients {
            println!(
                "  {:<7} {:<13.4} {}",
                i + 1,
                m.board.totals[i],
                m.board.rankings[i]
            );
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct DumpDataArgs {
    /// Config file (flat `key = value` lines; missing keys take defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Degradation setting override (quantity|noise|resolution|mask).
    #[arg(long)]
    pub setting: Option<String>,
    /// Output file for the dataset dump.
    #[arg(long, default_value = "datasets.bin")]
    pub out: PathBuf,
}

pub fn cmd_dump_data(args: DumpDataArgs) -> Result<()> {
    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(s) = &args.setting {
        overrides.push(("setting", s.clone()));
    }
    let cfg = resolve_config(args.config.as_deref(), &overrides)?;

    let (clients, validation) = engine::prepare_data(&cfg)?;
    storage::write_datasets(&args.out, &clients, &validation, cfg.height, cfg.width)?;

    for c in &clients {
        let mut counts = vec![0usize; cfg.n_classes];
        for s in &c.samples {
            counts[s.label] += 1;
        }
        println!(
            "client {}: {} samples, labels {:?}",
            c.client,
            c.samples.len(),
            counts
        );
    }
    println!("validation: {} samples", validation.len());
    println!("datasets written to {}", args.out.display());
    Ok(())
}
