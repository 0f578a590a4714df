//! Runs every requested contribution-assessment method over one run's logs.

use fedval_core::baselines::{self, RoundCtx};
use fedval_core::config::MethodKind;
use fedval_core::crossround;
use fedval_core::engine::ExperimentRun;
use fedval_core::error::Result;
use fedval_core::report::{self, MethodReport};
use fedval_core::ExperimentConfig;

/// Scores `run` with each method in `cfg.methods`, in the declared order,
/// and attaches each method's rank correlation against the ground-truth
/// ordering.
pub fn score_methods(run: &ExperimentRun, cfg: &ExperimentConfig) -> Result<Vec<MethodReport>> {
    let prune_cfg = cfg.prune_config();
    let val_cfg = cfg.valuation_config();
    cfg.methods
        .iter()
        .map(|&m| {
            let board = match m {
                MethodKind::CrossRound => {
                    crossround::assess(&run.logs, Some(&prune_cfg), &val_cfg)?
                }
                MethodKind::Shapley => baselines::score_all_rounds_par(&run.logs, |log| {
                    baselines::shapley_round(&RoundCtx::from_log(&run.arch, log, &run.validation))
                })?,
                MethodKind::Loo => baselines::score_all_rounds_par(&run.logs, |log| {
                    baselines::leave_one_out_round(&RoundCtx::from_log(
                        &run.arch,
                        log,
                        &run.validation,
                    ))
                })?,
                MethodKind::Cgsv => baselines::score_all_rounds_par(&run.logs, |log| {
                    baselines::cgsv_round(&log.updates)
                })?,
            };
            let rho = report::spearman(&run.ground_truth.ranking, &board.rankings)?;
            Ok(MethodReport {
                method: m.as_str().to_string(),
                rho,
                board,
            })
        })
        .collect()
}
