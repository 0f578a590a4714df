//! Rankings, Spearman correlation, and report emission.
//!
//! Ranking uses the counting rule `r_i = |{j : P_j ≥ P_i}|`: the best client
//! gets rank 1 and tied totals share the same (larger) rank. Spearman runs on
//! rank vectors with squared rank differences,
//! `ρ = 1 − 6·Σd² / (n(n²−1))`, evaluated as one division of two exactly
//! representable integers so the result is the correctly rounded value of the
//! underlying rational (and therefore matches any oracle that evaluates the
//! same rational in one division).
//!
//! A [`Report`] is persisted as `report.json` (summary: one ρ, the totals,
//! and the ranking per method) plus `scores.csv` (the full per-round score
//! table). Field order and float formatting are stable, so identical runs
//! produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossround::ScoreBoard;
use crate::error::{Error, Result};

/// Ranking by the counting rule `r_i = |{j : P_j ≥ P_i}|`.
pub fn rank(totals: &[f64]) -> Result<Vec<usize>> {
    if totals.is_empty() {
        return Err(Error::Structure("rank: empty totals".into()));
    }
    if totals.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("rank: NaN score total".into()));
    }
    Ok(totals
        .iter()
        .map(|&pi| totals.iter().filter(|&&pj| pj >= pi).count())
        .collect())
}

/// Spearman correlation between two rank vectors:
/// `ρ = (n(n²−1) − 6·Σd²) / (n(n²−1))` in one exact-integer division.
pub fn spearman(r: &[usize], r_hat: &[usize]) -> Result<f64> {
    let n = r.len();
    if n != r_hat.len() {
        return Err(Error::Structure(format!(
            "spearman: rank vectors of length {} and {}",
            n,
            r_hat.len()
        )));
    }
    if n < 2 {
        return Err(Error::Structure("spearman: need at least 2 clients".into()));
    }
    let d2: i64 = r
        .iter()
        .zip(r_hat)
        .map(|(&a, &b)| {
            let d = a as i64 - b as i64;
            d * d
        })
        .sum();
    let den = (n * (n * n - 1)) as i64;
    Ok((den - 6 * d2) as f64 / den as f64)
}

/// One method's outcome: its score board and the rank correlation of its
/// totals against the ground-truth ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub rho: f64,
    pub board: ScoreBoard,
}

/// Everything one run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub format_version: u32,
    pub seed: u64,
    pub setting: String,
    pub ground_truth: Vec<usize>,
    pub config: BTreeMap<String, String>,
    pub methods: Vec<MethodReport>,
}

/// Shape of `report.json`: the report minus the per-round tables, which live
/// in the referenced CSV.
#[derive(Serialize, Deserialize)]
struct ReportSummary {
    format_version: u32,
    seed: u64,
    setting: String,
    ground_truth: Vec<usize>,
    config: BTreeMap<String, String>,
    scores_file: String,
    methods: Vec<MethodSummary>,
}

#[derive(Serialize, Deserialize)]
struct MethodSummary {
    method: String,
    rho: f64,
    totals: Vec<f64>,
    rankings: Vec<usize>,
    rounds_scored: usize,
}

const SCORES_FILE: &str = "scores.csv";

/// Writes `report.json` and `scores.csv` under `dir` with stable ordering.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let summary = ReportSummary {
        format_version: report.format_version,
        seed: report.seed,
        setting: report.setting.clone(),
        ground_truth: report.ground_truth.clone(),
        config: report.config.clone(),
        scores_file: SCORES_FILE.to_string(),
        methods: report
            .methods
            .iter()
            .map(|m| MethodSummary {
                method: m.method.clone(),
                rho: m.rho,
                totals: m.board.totals.clone(),
                rankings: m.board.rankings.clone(),
                rounds_scored: m.board.rounds.len(),
            })
            .collect(),
    };
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&summary).expect("report serializes");
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let csv_path = dir.join(SCORES_FILE);
    let mut csv = Vec::new();
    writeln!(csv, "method,client,round,score").expect("vec write");
    for m in &report.methods {
        for (row, scores) in m.board.scores.iter().enumerate() {
            for (col, score) in scores.iter().enumerate() {
                writeln!(csv, "{},{},{},{}", m.method, row + 1, m.board.rounds[col], score)
                    .expect("vec write");
            }
        }
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Reads a report directory back; the inverse of [`emit_report`].
pub fn parse_report(dir: &Path) -> Result<Report> {
    let json_path = dir.join("report.json");
    let raw = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let summary: ReportSummary = serde_json::from_str(&raw)
        .map_err(|e| Error::Structure(format!("{}: {e}", json_path.display())))?;

    let csv_path = dir.join(&summary.scores_file);
    let raw = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut rows: BTreeMap<String, Vec<(usize, u32, f64)>> = BTreeMap::new();
    for (lineno, line) in raw.lines().enumerate() {
        if lineno == 0 {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Structure(format!(
                "{}: line {} has {} fields",
                csv_path.display(),
                lineno + 1,
                parts.len()
            )));
        }
        let bad = |what: &str| {
            Error::Structure(format!("{}: line {} bad {what}", csv_path.display(), lineno + 1))
        };
        let client: usize = parts[1].parse().map_err(|_| bad("client"))?;
        let round: u32 = parts[2].parse().map_err(|_| bad("round"))?;
        let score: f64 = parts[3].parse().map_err(|_| bad("score"))?;
        rows.entry(parts[0].to_string()).or_default().push((client, round, score));
    }

    let methods = summary
        .methods
        .iter()
        .map(|m| {
            let entries = rows.remove(&m.method).unwrap_or_default();
            let n_clients = m.totals.len();
            let mut rounds: Vec<u32> = entries
                .iter()
                .filter(|(c, _, _)| *c == 1)
                .map(|&(_, t, _)| t)
                .collect();
            rounds.sort_unstable();
            let mut scores = vec![vec![0.0; rounds.len()]; n_clients];
            for (client, round, score) in entries {
                let col = rounds
                    .binary_search(&round)
                    .map_err(|_| Error::Structure(format!("scores.csv: stray round {round}")))?;
                if client == 0 || client > n_clients {
                    return Err(Error::Structure(format!("scores.csv: stray client {client}")));
                }
                scores[client - 1][col] = score;
            }
            Ok(MethodReport {
                method: m.method.clone(),
                rho: m.rho,
                board: ScoreBoard {
                    n_clients,
                    rounds,
                    scores,
                    totals: m.totals.clone(),
                    rankings: m.rankings.clone(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Report {
        format_version: summary.format_version,
        seed: summary.seed,
        setting: summary.setting,
        ground_truth: summary.ground_truth,
        config: summary.config,
        methods,
    })
}
