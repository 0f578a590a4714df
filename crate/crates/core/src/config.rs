//! Flat key-value experiment configuration.
//!
//! The on-disk format is one `key = value` pair per line; `#` starts a
//! comment and blank lines are skipped. Every key has a default, so an empty
//! document is a valid config. Parsing collects all violations (unknown keys,
//! bad values, duplicates, range errors) into a single error so a bad file is
//! fixed in one pass. `serialize` emits every key in a fixed order with
//! round-trip-exact float formatting: `parse(serialize(c)) == c`.
//!
//! Override precedence is flags > environment > file > defaults. The
//! environment layer reads `FEDVAL_<KEY>` (key uppercased), e.g.
//! `FEDVAL_ROUNDS=30`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossround::{Clip, PruneConfig, Selection, TailPolicy, ValuationConfig, ValuationMode};
use crate::engine::AggregationMode;
use crate::error::{Error, Result};
use crate::model::{Activation, ModelArch, TrainConfig};
use crate::synthdata::SettingKind;

/// Environment variable prefix for config overrides.
pub const ENV_PREFIX: &str = "FEDVAL_";

/// How client updates are folded into the global model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationKind {
    /// Uniform federated averaging of raw updates.
    Plain,
    /// Layer-wise pruned sign votes scaled by alpha.
    Pruned,
}

impl AggregationKind {
    pub fn parse(s: &str) -> Option<AggregationKind> {
        match s {
            "plain" => Some(AggregationKind::Plain),
            "pruned" => Some(AggregationKind::Pruned),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationKind::Plain => "plain",
            AggregationKind::Pruned => "pruned",
        }
    }
}

/// A contribution-assessment method selectable in `methods`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Validation-free cross-round sign valuation.
    CrossRound,
    /// Exact per-round Shapley over validation accuracy.
    Shapley,
    /// Leave-one-out over validation accuracy.
    Loo,
    /// Cosine of each update against the round's summed update.
    Cgsv,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::CrossRound,
        MethodKind::Shapley,
        MethodKind::Loo,
        MethodKind::Cgsv,
    ];

    pub fn parse(s: &str) -> Option<MethodKind> {
        match s {
            "cross_round" => Some(MethodKind::CrossRound),
            "shapley" => Some(MethodKind::Shapley),
            "loo" => Some(MethodKind::Loo),
            "cgsv" => Some(MethodKind::Cgsv),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::CrossRound => "cross_round",
            MethodKind::Shapley => "shapley",
            MethodKind::Loo => "loo",
            MethodKind::Cgsv => "cgsv",
        }
    }
}

/// Everything one experiment run needs. See module docs for the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_clients: usize,
    pub rounds: u32,
    /// Cross-round look-ahead window k.
    pub window: usize,
    /// Percentage of each layer kept by pruning.
    pub ratio_pct: f64,
    /// Step size for aggregated sign votes.
    pub alpha: f64,
    pub setting: SettingKind,
    pub aggregation: AggregationKind,
    pub valuation_mode: ValuationMode,
    pub tail_policy: TailPolicy,
    pub selection: Selection,
    pub clip: Clip,
    pub hidden_dims: Vec<usize>,
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    /// Training pool size before per-client degradation.
    pub n_train: usize,
    /// Held-out validation size (used by the validation-based methods only).
    pub n_val: usize,
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    /// Master seed; every stream in the run derives from it.
    pub seed: u64,
    /// Number of consecutive seeds for multi-seed runs (seed, seed+1, ...).
    pub seeds: u64,
    pub methods: Vec<MethodKind>,
    pub out_dir: String,
    pub activation: Activation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_clients: 5,
            rounds: 60,
            window: 2,
            ratio_pct: 10.0,
            alpha: 0.02,
            setting: SettingKind::Quantity,
            aggregation: AggregationKind::Pruned,
            valuation_mode: ValuationMode::ParameterSign,
            tail_policy: TailPolicy::Truncate,
            selection: Selection::ByAbs,
            clip: Clip::Sign,
            hidden_dims: vec![64],
            height: 16,
            width: 16,
            n_classes: 4,
            n_train: 2000,
            n_val: 200,
            learning_rate: 0.01,
            decay: 0.99,
            // Few, large steps per round: the synthetic task is easy enough
            // that small batches saturate accuracy within a round or two,
            // which would leave the aggregation dynamics nothing to show.
            batch_size: 256,
            local_epochs: 1,
            seed: 1,
            seeds: 1,
            methods: MethodKind::ALL.to_vec(),
            out_dir: "out".into(),
            activation: Activation::Relu,
        }
    }
}

/// Canonical key order for serialization and the manifest echo.
const KEYS: [&str; 26] = [
    "n_clients",
    "rounds",
    "window",
    "ratio_pct",
    "alpha",
    "setting",
    "aggregation",
    "valuation_mode",
    "tail_policy",
    "selection",
    "clip",
    "hidden_dims",
    "height",
    "width",
    "n_classes",
    "n_train",
    "n_val",
    "learning_rate",
    "decay",
    "batch_size",
    "local_epochs",
    "seed",
    "seeds",
    "methods",
    "out_dir",
    "activation",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn parse_list<T, F>(key: &str, value: &str, one: F) -> std::result::Result<Vec<T>, String>
where
    F: Fn(&str) -> Option<T>,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(str::trim)
        .map(|item| one(item).ok_or_else(|| format!("{key}: unknown item {item:?}")))
        .collect()
}

impl ExperimentConfig {
    /// Parses a config document, applying each pair over the defaults.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1));
                continue;
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                problems.push(format!("line {}: duplicate key {key:?}", lineno + 1));
                continue;
            }
            seen.push(key.to_string());
            if let Err(msg) = cfg.apply_kv(key, value) {
                problems.push(format!("line {}: {msg}", lineno + 1));
            }
        }
        if let Err(Error::Config(msg)) = cfg.validate() {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Sets one field from its textual form. Unknown keys and malformed
    /// values are reported, not panicked on.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "n_clients" => self.n_clients = parse_num(key, value)?,
            "rounds" => self.rounds = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "ratio_pct" => self.ratio_pct = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "setting" => {
                self.setting = SettingKind::parse(value)
                    .ok_or_else(|| format!("setting: unknown value {value:?}"))?;
            }
            "aggregation" => {
                self.aggregation = AggregationKind::parse(value)
                    .ok_or_else(|| format!("aggregation: unknown value {value:?}"))?;
            }
            "valuation_mode" => {
                self.valuation_mode = ValuationMode::parse(value)
                    .ok_or_else(|| format!("valuation_mode: unknown value {value:?}"))?;
            }
            "tail_policy" => {
                self.tail_policy = TailPolicy::parse(value)
                    .ok_or_else(|| format!("tail_policy: unknown value {value:?}"))?;
            }
            "selection" => {
                self.selection = Selection::parse(value)
                    .ok_or_else(|| format!("selection: unknown value {value:?}"))?;
            }
            "clip" => {
                self.clip = Clip::parse(value)
                    .ok_or_else(|| format!("clip: unknown value {value:?}"))?;
            }
            "hidden_dims" => {
                self.hidden_dims = parse_list(key, value, |s| s.parse::<usize>().ok())?;
            }
            "height" => self.height = parse_num(key, value)?,
            "width" => self.width = parse_num(key, value)?,
            "n_classes" => self.n_classes = parse_num(key, value)?,
            "n_train" => self.n_train = parse_num(key, value)?,
            "n_val" => self.n_val = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "decay" => self.decay = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "local_epochs" => self.local_epochs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "seeds" => self.seeds = parse_num(key, value)?,
            "methods" => self.methods = parse_list(key, value, MethodKind::parse)?,
            "out_dir" => self.out_dir = value.to_string(),
            "activation" => {
                self.activation = Activation::parse(value)
                    .ok_or_else(|| format!("activation: unknown value {value:?}"))?;
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies `FEDVAL_<KEY>` pairs (already filtered to the prefix). Unknown
    /// or malformed variables are collected into one error.
    pub fn apply_env_pairs<I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut problems = Vec::new();
        for (name, value) in pairs {
            let Some(suffix) = name.strip_prefix(ENV_PREFIX) else {
                problems.push(format!("{name}: missing {ENV_PREFIX} prefix"));
                continue;
            };
            let key = suffix.to_ascii_lowercase();
            if let Err(msg) = self.apply_kv(&key, value.trim()) {
                problems.push(format!("{name}: {msg}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Value of one key in its on-disk textual form.
    pub fn value_of(&self, key: &str) -> Option<String> {
        let join_usize = |v: &[usize]| {
            v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        };
        Some(match key {
            "n_clients" => self.n_clients.to_string(),
            "rounds" => self.rounds.to_string(),
            "window" => self.window.to_string(),
            "ratio_pct" => self.ratio_pct.to_string(),
            "alpha" => self.alpha.to_string(),
            "setting" => self.setting.as_str().to_string(),
            "aggregation" => self.aggregation.as_str().to_string(),
            "valuation_mode" => self.valuation_mode.as_str().to_string(),
            "tail_policy" => self.tail_policy.as_str().to_string(),
            "selection" => self.selection.as_str().to_string(),
            "clip" => self.clip.as_str().to_string(),
            "hidden_dims" => join_usize(&self.hidden_dims),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "n_classes" => self.n_classes.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_val" => self.n_val.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "decay" => self.decay.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "local_epochs" => self.local_epochs.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "methods" => self
                .methods
                .iter()
                .map(|m| m.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "out_dir" => self.out_dir.clone(),
            "activation" => self.activation.as_str().to_string(),
            _ => return None,
        })
    }

    /// Canonical textual form: every key, fixed order, one pair per line.
    /// Floats use shortest-round-trip formatting, so parse∘serialize is the
    /// identity.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.value_of(key).expect("KEYS covers every field");
            writeln!(out, "{key} = {value}").unwrap();
        }
        out
    }

    /// All pairs in canonical textual form, for the manifest echo.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|&k| (k.to_string(), self.value_of(k).expect("KEYS covers every field")))
            .collect()
    }

    /// SHA-256 of the canonical serialization, hex-encoded. Stored in the
    /// manifest so replay tooling can refuse mismatched configs.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every field against its range; collects all violations into
    /// one error message.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_clients == 0 {
            bad.push("n_clients must be at least 1".to_string());
        }
        if self.rounds == 0 {
            bad.push("rounds must be at least 1".to_string());
        }
        if self.window == 0 {
            bad.push("window must be at least 1".to_string());
        }
        if !(self.ratio_pct > 0.0 && self.ratio_pct <= 100.0) {
            bad.push(format!("ratio_pct must be in (0, 100], got {}", self.ratio_pct));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bad.push(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if self.hidden_dims.contains(&0) {
            bad.push("hidden_dims entries must be at least 1".to_string());
        }
        if self.height * self.width < 16 {
            bad.push(format!(
                "image must have at least 16 pixels, got {}x{}",
                self.height, self.width
            ));
        }
        if self.n_classes < 2 {
            bad.push(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.n_train < self.n_classes.max(self.n_clients) {
            bad.push(format!(
                "n_train must cover every class and client, got {}",
                self.n_train
            ));
        }
        if self.n_val == 0 {
            bad.push("n_val must be at least 1".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            bad.push(format!("decay must be in (0, 1], got {}", self.decay));
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be at least 1".to_string());
        }
        if self.local_epochs == 0 {
            bad.push("local_epochs must be at least 1".to_string());
        }
        if self.seeds == 0 {
            bad.push("seeds must be at least 1".to_string());
        }
        if self.methods.is_empty() {
            bad.push("methods must name at least one method".to_string());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                bad.push(format!("methods lists {} twice", m.as_str()));
            }
        }
        if self.out_dir.is_empty() {
            bad.push("out_dir must be nonempty".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn model_arch(&self) -> ModelArch {
        ModelArch {
            input_dim: self.height * self.width,
            hidden_dims: self.hidden_dims.clone(),
            n_classes: self.n_classes,
            activation: self.activation,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr0: self.learning_rate,
            decay: self.decay,
            batch_size: self.batch_size,
            local_epochs: self.local_epochs,
        }
    }

    pub fn prune_config(&self) -> PruneConfig {
        PruneConfig {
            ratio_pct: self.ratio_pct,
            alpha: self.alpha,
            selection: self.selection,
            clip: self.clip,
        }
    }

    pub fn valuation_config(&self) -> ValuationConfig {
        ValuationConfig {
            window: self.window,
            mode: self.valuation_mode,
            tail: self.tail_policy,
        }
    }

    pub fn aggregation_mode(&self) -> AggregationMode {
        match self.aggregation {
            AggregationKind::Plain => AggregationMode::Plain,
            AggregationKind::Pruned => AggregationMode::Pruned(self.prune_config()),
        }
    }
}
