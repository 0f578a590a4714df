//! Round orchestration: local training, aggregation, and round logging.
//!
//! A round takes the previous global parameters, trains every client locally,
//! and aggregates:
//!
//! - plain mode: `Θ^t = Θ^{t−1} + (1/N)·Σ Δ_i` (uniform FedAvg, which equals
//!   the elementwise mean of the local models);
//! - pruned mode: each raw update is pruned to a layer-wise ternary vote and
//!   `Θ^t = Θ^{t−1} + (α/N)·Σ Δ̃_i`.
//!
//! Client sums always run in ascending client order, so logged rounds can be
//! re-verified bit-for-bit against the aggregation identity. Raw updates are
//! logged even in pruned mode because the validation-based baselines need
//! them.

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::crossround::{self, PruneConfig};
use crate::error::{Error, Result};
use crate::model::{self, ModelArch, TrainConfig};
use crate::params::LayeredParams;
use crate::rng::{derive, derive2, stream};
use crate::synthdata::{self, ClientDataset, GroundTruth, Sample};

/// How client updates are combined each round.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationMode {
    Plain,
    Pruned(PruneConfig),
}

/// Persisted record of one round. `pruned` is `None` under plain aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub round: u32,
    pub global_before: LayeredParams,
    pub updates: Vec<LayeredParams>,
    pub pruned: Option<Vec<LayeredParams>>,
    pub global_after: LayeredParams,
}

/// Sums `parts` elementwise in ascending index order.
fn ordered_sum(parts: &[LayeredParams]) -> Result<LayeredParams> {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = acc.add(p)?;
    }
    Ok(acc)
}

/// Aggregates already-trained local models into a [`RoundLog`]. Raw updates
/// are `Δ_i = θ_i − Θ^{t−1}`.
pub fn aggregate_round(
    t: u32,
    global_before: &LayeredParams,
    locals: &[LayeredParams],
    mode: &AggregationMode,
) -> Result<RoundLog> {
    if locals.is_empty() {
        return Err(Error::Structure(format!("round {t}: no client models")));
    }
    let n = locals.len() as f64;
    let updates: Vec<LayeredParams> = locals
        .iter()
        .map(|theta| theta.sub(global_before))
        .collect::<Result<_>>()?;

    let (pruned, global_after) = match mode {
        AggregationMode::Plain => {
            let mean_update = ordered_sum(&updates)?.scale(1.0 / n);
            (None, global_before.add(&mean_update)?)
        }
        AggregationMode::Pruned(cfg) => {
            let pruned: Vec<LayeredParams> = updates
                .iter()
                .map(|d| crossround::prune(d, cfg))
                .collect::<Result<_>>()?;
            let vote = ordered_sum(&pruned)?.scale(cfg.alpha / n);
            (Some(pruned), global_before.add(&vote)?)
        }
    };

    Ok(RoundLog {
        round: t,
        global_before: global_before.clone(),
        updates,
        pruned,
        global_after,
    })
}

/// Trains all clients for round `t` (in parallel; each client owns a derived
/// RNG stream) and aggregates.
pub fn run_round(
    t: u32,
    global: &LayeredParams,
    clients: &[ClientDataset],
    arch: &ModelArch,
    train_cfg: &TrainConfig,
    mode: &AggregationMode,
    train_root: u64,
) -> Result<RoundLog> {
    let locals: Vec<LayeredParams> = clients
        .par_iter()
        .map(|ds| {
            let seed = derive2(train_root, t as u64, ds.client as u64);
            model::local_train(arch, global, &ds.samples, train_cfg, t, ds.client, seed)
        })
        .collect::<Result<_>>()?;
    aggregate_round(t, global, &locals, mode)
}

/// Everything produced by one simulated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub arch: ModelArch,
    pub logs: Vec<RoundLog>,
    pub clients: Vec<ClientDataset>,
    pub validation: Vec<Sample>,
    pub ground_truth: GroundTruth,
}

/// Generates the sample pool, splits off validation, and degrades the
/// per-client datasets according to `cfg.setting`. The experiment driver and
/// the dataset-dump path share this so dumped data is exactly what a run
/// trains on.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Vec<ClientDataset>, Vec<Sample>)> {
    cfg.validate()?;
    let base = synthdata::generate_base(
        derive(cfg.seed, stream::DATA_BASE),
        cfg.n_train + cfg.n_val,
        cfg.height,
        cfg.width,
        cfg.n_classes,
    )?;
    let validation = synthdata::make_validation(&base, cfg.n_train, cfg.n_val)?;
    let clients = synthdata::build_client_datasets(
        &base[..cfg.n_train],
        cfg.setting,
        cfg.n_clients,
        cfg.height,
        cfg.width,
        cfg.seed,
    )?;
    Ok((clients, validation))
}

/// Generates data, initializes the model, and runs all `cfg.rounds` rounds
/// sequentially. Deterministic per `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let arch = cfg.model_arch();
    let train_cfg = cfg.train_config();
    let mode = cfg.aggregation_mode();
    let (clients, validation) = prepare_data(cfg)?;

    let mut global = model::init_params(&arch, derive(cfg.seed, stream::MODEL_INIT));
    let train_root = derive(cfg.seed, stream::TRAIN);

    let mut logs = Vec::with_capacity(cfg.rounds as usize);
    for t in 1..=cfg.rounds {
        let log = run_round(t, &global, &clients, &arch, &train_cfg, &mode, train_root)?;
        global = log.global_after.clone();
        logs.push(log);
    }

    Ok(ExperimentRun {
        arch,
        logs,
        clients,
        validation,
        ground_truth: GroundTruth::for_clients(cfg.n_clients),
    })
}
