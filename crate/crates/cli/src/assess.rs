//! The `assess` subcommand: offline re-scoring of persisted round logs.
//!
//! Valuation and prune parameters default to what the manifest echoes from
//! the original run; flags override individual fields. Because the logs are
//! independent of the valuation window, sweeping `--window` over one run
//! directory re-scores without any retraining.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use fedval_core::crossround::{self, Clip, Selection, TailPolicy, ValuationMode};
use fedval_core::error::{Error, Result};
use fedval_core::report;
use fedval_core::storage::{self, Manifest};
use fedval_core::synthdata::GroundTruth;
use fedval_core::{PruneConfig, ValuationConfig};

#[derive(Args)]
pub struct AssessArgs {
    /// Run directory containing manifest.json and rounds/.
    pub log_dir: PathBuf,
    /// Look-ahead window k override.
    #[arg(long)]
    pub window: Option<usize>,
    /// Valuation mode override (parameter_sign|update_sign).
    #[arg(long)]
    pub mode: Option<String>,
    /// Tail policy override (truncate|drop).
    #[arg(long)]
    pub tail: Option<String>,
    /// Prune keep-ratio override, percent. Forces re-pruning of raw updates.
    #[arg(long)]
    pub ratio_pct: Option<f64>,
    /// Vote step-size override. Forces re-pruning of raw updates.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Prune selection override (by_abs|by_value). Forces re-pruning.
    #[arg(long)]
    pub selection: Option<String>,
    /// Prune clip override (sign|none). Forces re-pruning.
    #[arg(long)]
    pub clip: Option<String>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON document emitted per assessment.
#[derive(Serialize)]
struct Assessment {
    log_dir: String,
    setting: String,
    window: usize,
    mode: String,
    tail: String,
    ratio_pct: f64,
    alpha: f64,
    selection: String,
    clip: String,
    rounds_scored: usize,
    ground_truth: Vec<usize>,
    totals: Vec<f64>,
    rankings: Vec<usize>,
    rho: f64,
}

/// A manifest config value; its absence means the manifest is damaged.
fn manifest_value<'a>(manifest: &'a Manifest, key: &str) -> Result<&'a str> {
    manifest
        .config
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::CorruptLog(format!("manifest config lacks key {key:?}")))
}

fn manifest_parse<T, F>(manifest: &Manifest, key: &str, parse: F) -> Result<T>
where
    F: FnOnce(&str) -> Option<T>,
{
    let raw = manifest_value(manifest, key)?;
    parse(raw).ok_or_else(|| Error::CorruptLog(format!("manifest config {key} = {raw:?} is invalid")))
}

fn flag_parse<T, F>(key: &str, raw: &str, parse: F) -> Result<T>
where
    F: FnOnce(&str) -> Option<T>,
{
    parse(raw).ok_or_else(|| Error::Config(format!("{key}: unknown value {raw:?}")))
}

pub fn cmd_assess(args: AssessArgs) -> Result<()> {
    let (manifest, mut logs) = storage::replay(&args.log_dir)?;

    let mut val_cfg = ValuationConfig {
        window: manifest_parse(&manifest, "window", |s| s.parse().ok())?,
        mode: manifest_parse(&manifest, "valuation_mode", ValuationMode::parse)?,
        tail: manifest_parse(&manifest, "tail_policy", TailPolicy::parse)?,
    };
    if let Some(k) = args.window {
        val_cfg.window = k;
    }
    if let Some(s) = &args.mode {
        val_cfg.mode = flag_parse("mode", s, ValuationMode::parse)?;
    }
    if let Some(s) = &args.tail {
        val_cfg.tail = flag_parse("tail", s, TailPolicy::parse)?;
    }
    val_cfg.validate()?;

    let mut prune_cfg = PruneConfig {
        ratio_pct: manifest_parse(&manifest, "ratio_pct", |s| s.parse().ok())?,
        alpha: manifest_parse(&manifest, "alpha", |s| s.parse().ok())?,
        selection: manifest_parse(&manifest, "selection", Selection::parse)?,
        clip: manifest_parse(&manifest, "clip", Clip::parse)?,
    };
    let reprune = args.ratio_pct.is_some()
        || args.alpha.is_some()
        || args.selection.is_some()
        || args.clip.is_some();
    if let Some(r) = args.ratio_pct {
        prune_cfg.ratio_pct = r;
    }
    if let Some(a) = args.alpha {
        prune_cfg.alpha = a;
    }
    if let Some(s) = &args.selection {
        prune_cfg.selection = flag_parse("selection", s, Selection::parse)?;
    }
    if let Some(s) = &args.clip {
        prune_cfg.clip = flag_parse("clip", s, Clip::parse)?;
    }
    prune_cfg.validate()?;
    if reprune {
        // Stored ternary votes reflect the original prune parameters; drop
        // them so the valuation re-prunes the raw updates under the new ones.
        for log in &mut logs {
            log.pruned = None;
        }
    }

    let board = crossround::assess(&logs, Some(&prune_cfg), &val_cfg)?;
    let ground_truth = GroundTruth::for_clients(board.n_clients);
    let rho = report::spearman(&ground_truth.ranking, &board.rankings)?;

    let doc = Assessment {
        log_dir: args.log_dir.display().to_string(),
        setting: manifest.setting.as_str().to_string(),
        window: val_cfg.window,
        mode: val_cfg.mode.as_str().to_string(),
        tail: val_cfg.tail.as_str().to_string(),
        ratio_pct: prune_cfg.ratio_pct,
        alpha: prune_cfg.alpha,
        selection: prune_cfg.selection.as_str().to_string(),
        clip: prune_cfg.clip.as_str().to_string(),
        rounds_scored: board.rounds.len(),
        ground_truth: ground_truth.ranking,
        totals: board.totals,
        rankings: board.rankings,
        rho,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("assessment serializes");
    json.push('\n');
    match &args.out {
        Some(path) => {
            std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
            println!("assessment written to {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}
