//! The `run` subcommand: config resolution, seed fan-out, summaries, and
//! config-grid orchestration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fedval_core::config::ENV_PREFIX;
use fedval_core::engine;
use fedval_core::error::{Error, Result};
use fedval_core::report::{self, Report};
use fedval_core::storage::{self, Manifest};
use fedval_core::ExperimentConfig;

use crate::scoring;

#[derive(Args)]
pub struct RunArgs {
    /// Config file (flat `key = value` lines; missing keys take defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// File listing config paths (one per line, `#` comments, paths relative
    /// to the list file). Runs each into `<out>/<file stem>/` and writes
    /// grid_summary.json at the root.
    #[arg(long, conflicts_with_all = ["config", "seed", "seeds", "setting", "method", "dump_data"])]
    pub grid: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to run (seed, seed+1, ...).
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Output root; per-seed results land in `<out>/seed_<s>/`.
    #[arg(long)]
    pub out: Option<String>,
    /// Worker threads shared by all parallel work (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Degradation setting override (quantity|noise|resolution|mask).
    #[arg(long)]
    pub setting: Option<String>,
    /// Methods override, comma separated (cross_round,shapley,loo,cgsv).
    #[arg(long)]
    pub method: Option<String>,
    /// Also write each seed's datasets to `<seed dir>/datasets.bin`.
    #[arg(long)]
    pub dump_data: bool,
}

/// Resolves the effective config with the documented precedence: defaults,
/// then the file, then `FEDVAL_*` environment pairs, then command-line
/// overrides; validates the result.
pub fn resolve_config(
    file: Option<&Path>,
    overrides: &[(&str, String)],
) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env_pairs(std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)))?;
    let mut problems = Vec::new();
    for (key, value) in overrides {
        if let Err(p) = cfg.apply_kv(key, value) {
            problems.push(p);
        }
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Builds the shared worker pool; `None` falls back to one thread per core.
fn worker_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))
}

pub fn cmd_run(args: RunArgs) -> Result<()> {
    if let Some(grid) = &args.grid {
        return run_grid(grid, args.out.as_deref(), args.jobs);
    }

    let mut overrides: Vec<(&str, String)> = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(s) = args.seeds {
        overrides.push(("seeds", s.to_string()));
    }
    if let Some(s) = &args.setting {
        overrides.push(("setting", s.clone()));
    }
    if let Some(m) = &args.method {
        overrides.push(("methods", m.clone()));
    }
    if let Some(o) = &args.out {
        overrides.push(("out_dir", o.clone()));
    }
    let cfg = resolve_config(args.config.as_deref(), &overrides)?;

    let pool = worker_pool(args.jobs)?;
    let summary = pool.install(|| run_all_seeds(&cfg, args.dump_data))?;
    let root = PathBuf::from(&cfg.out_dir);
    write_summary(&summary, &root)?;
    print_summary(&summary, &root);
    Ok(())
}

/// One seed's contribution to the run summary.
#[derive(Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    /// Subdirectory name under the output root.
    pub dir: String,
    /// Rank correlation per method.
    pub rho: BTreeMap<String, f64>,
}

/// Aggregate outcome of a (possibly multi-seed) run. Persisted as
/// summary.json; contains no timings, so identical runs serialize
/// byte-identically.
#[derive(Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub setting: String,
    /// Hash of the resolved invocation config (seed range included).
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
    /// Per-method mean rank correlation over all seeds.
    pub mean_rho: BTreeMap<String, f64>,
}

struct SeedOutcome {
    summary: SeedSummary,
    console: String,
}

/// Runs seeds `cfg.seed .. cfg.seed + cfg.seeds` in parallel worker slots.
/// Each seed is fully isolated: its own subdirectory and its own RNG root.
fn run_all_seeds(cfg: &ExperimentConfig, dump: bool) -> Result<RunSummary> {
    let root = PathBuf::from(&cfg.out_dir);
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + cfg.seeds).collect();
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&s| run_one_seed(cfg, s, &root, dump))
        .collect::<Result<_>>()?;
    for o in &outcomes {
        println!("{}", o.console);
    }

    let per_seed: Vec<SeedSummary> = outcomes.into_iter().map(|o| o.summary).collect();
    let mut mean_rho = BTreeMap::new();
    for m in &cfg.methods {
        let key = m.as_str().to_string();
        let sum: f64 = per_seed.iter().map(|s| s.rho[&key]).sum();
        mean_rho.insert(key, sum / per_seed.len() as f64);
    }
    Ok(RunSummary {
        format_version: storage::FORMAT_VERSION,
        setting: cfg.setting.as_str().to_string(),
        config_hash: cfg.config_hash(),
        seeds,
        per_seed,
        mean_rho,
    })
}

/// Runs one seed end to end: simulate, persist logs, score, emit the report.
fn run_one_seed(
    base: &ExperimentConfig,
    seed: u64,
    root: &Path,
    dump: bool,
) -> Result<SeedOutcome> {
    let started = Instant::now();
    let dir_name = format!("seed_{seed}");
    let dir = root.join(&dir_name);

    // The per-seed config is standalone: replaying the echoed config
    // reproduces exactly this directory.
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.seeds = 1;
    cfg.out_dir = dir.to_string_lossy().into_owned();

    let run = engine::run_experiment(&cfg)?;
    let manifest = Manifest::new(&cfg, &run.arch.architecture());
    storage::write_run(&dir, &manifest, &run.logs)?;
    if dump {
        let data_path = dir.join("datasets.bin");
        storage::write_datasets(&data_path, &run.clients, &run.validation, cfg.height, cfg.width)?;
    }

    let methods = scoring::score_methods(&run, &cfg)?;
    let report = Report {
        format_version: storage::FORMAT_VERSION,
        seed,
        setting: cfg.setting.as_str().to_string(),
        ground_truth: run.ground_truth.ranking.clone(),
        config: cfg.to_map(),
        methods,
    };
    report::emit_report(&report, &dir)?;

    let mut rho = BTreeMap::new();
    let mut parts = Vec::new();
    for m in &report.methods {
        rho.insert(m.method.clone(), m.rho);
        parts.push(format!("{} rho={:+.3}", m.method, m.rho));
    }
    let console = format!(
        "seed {seed} [{}]: {} ({:.1} s)",
        cfg.setting.as_str(),
        parts.join(", "),
        started.elapsed().as_secs_f64()
    );
    Ok(SeedOutcome {
        summary: SeedSummary {
            seed,
            dir: dir_name,
            rho,
        },
        console,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).expect("summary serializes");
    json.push('\n');
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn write_summary(summary: &RunSummary, root: &Path) -> Result<()> {
    write_json(&root.join("summary.json"), summary)
}

fn print_summary(summary: &RunSummary, root: &Path) {
    println!("mean rho over {} seed(s):", summary.seeds.len());
    for (method, rho) in &summary.mean_rho {
        println!("  {method:<12} {rho:+.4}");
    }
    println!("summary written to {}", root.join("summary.json").display());
}

/// One grid entry's outcome inside grid_summary.json.
#[derive(Serialize, Deserialize)]
pub struct GridRow {
    /// File stem of the config; also the output subdirectory name.
    pub name: String,
    /// Config path as listed in the grid file.
    pub config: String,
    pub setting: String,
    pub seeds: Vec<u64>,
    pub mean_rho: BTreeMap<String, f64>,
}

/// Runs every config in the grid file sequentially (seeds within each config
/// still use the worker pool) and writes grid_summary.json.
fn run_grid(grid: &Path, out: Option<&str>, jobs: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(grid).map_err(|e| Error::io(grid, e))?;
    let base_dir = grid.parent().unwrap_or(Path::new("."));
    let out_root = PathBuf::from(out.unwrap_or("out"));

    let mut entries: Vec<(String, String, PathBuf)> = Vec::new();
    let mut stems = BTreeSet::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let path = base_dir.join(line);
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Config(format!("grid entry {line:?} has no usable file name")))?;
        if !stems.insert(stem.clone()) {
            return Err(Error::Config(format!(
                "grid entries collide on output name {stem:?}"
            )));
        }
        entries.push((stem, line.to_string(), path));
    }
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "grid file {} lists no configs",
            grid.display()
        )));
    }

    let pool = worker_pool(jobs)?;
    let mut rows = Vec::new();
    for (stem, listed, path) in &entries {
        println!("== {stem} ({}) ==", path.display());
        let mut cfg = resolve_config(Some(path), &[])?;
        cfg.out_dir = out_root.join(stem).to_string_lossy().into_owned();
        let summary = pool.install(|| run_all_seeds(&cfg, false))?;
        write_summary(&summary, Path::new(&cfg.out_dir))?;
        rows.push(GridRow {
            name: stem.clone(),
            config: listed.clone(),
            setting: summary.setting.clone(),
            seeds: summary.seeds.clone(),
            mean_rho: summary.mean_rho.clone(),
        });
    }

    std::fs::create_dir_all(&out_root).map_err(|e| Error::io(&out_root, e))?;
    let path = out_root.join("grid_summary.json");
    write_json(&path, &rows)?;
    println!("grid summary written to {}", path.display());
    Ok(())
}
