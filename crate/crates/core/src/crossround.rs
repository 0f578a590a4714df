//! Layer-wise ternary pruning and cross-round sign-similarity valuation.
//!
//! Pruning keeps, per layer of `n_j` elements, the `⌊n_j·r/100⌋` largest
//! update magnitudes and replaces them with their signs, so a pruned update
//! is a ternary vote in `{−1, 0, +1}`. Valuation scores a round-`t` client by
//! counting sign agreements between the client's parameters (or pruned
//! update) and the global movement over the following `k` rounds,
//! `U^{(t,k)} = Θ^{t+k} − Θ^t`. The score needs no validation data.
//!
//! Scores are exact integers; their per-client sums and the derived rankings
//! live in a [`ScoreBoard`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::RoundLog;
use crate::error::{Error, Result};
use crate::params::{sgn, Layer, LayeredParams};
use crate::report;

/// Which update coordinates survive pruning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Largest magnitudes first (default; consistent with ternary votes).
    ByAbs,
    /// Largest signed values first, kept as an escape hatch for comparison
    /// with the magnitude rule.
    ByValue,
}

impl Selection {
    pub fn parse(s: &str) -> Option<Selection> {
        match s {
            "by_abs" => Some(Selection::ByAbs),
            "by_value" => Some(Selection::ByValue),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Selection::ByAbs => "by_abs",
            Selection::ByValue => "by_value",
        }
    }
}

/// What happens to the surviving coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clip {
    /// Replace with the sign (default): votes in {−1, 0, +1}.
    Sign,
    /// Keep the raw value; used by the clipping-strategy comparison.
    None,
}

impl Clip {
    pub fn parse(s: &str) -> Option<Clip> {
        match s {
            "sign" => Some(Clip::Sign),
            "none" => Some(Clip::None),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Clip::Sign => "sign",
            Clip::None => "none",
        }
    }
}

/// Pruning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Percentage of each layer kept, in (0, 100].
    pub ratio_pct: f64,
    /// Step size applied to the aggregated votes.
    pub alpha: f64,
    pub selection: Selection,
    pub clip: Clip,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            ratio_pct: 10.0,
            alpha: 0.02,
            selection: Selection::ByAbs,
            clip: Clip::Sign,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.ratio_pct > 0.0 && self.ratio_pct <= 100.0) {
            bad.push(format!("ratio_pct must be in (0, 100], got {}", self.ratio_pct));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bad.push(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Kept count for a layer of `n` elements.
    pub fn keep_count(&self, n: usize) -> usize {
        (n as f64 * self.ratio_pct / 100.0).floor() as usize
    }
}

/// Whose signs are compared against the global movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationMode {
    /// Signs of the client's full local parameters θ_i^t.
    ParameterSign,
    /// Signs of the client's pruned update Δ̃_i^t.
    UpdateSign,
}

impl ValuationMode {
    pub fn parse(s: &str) -> Option<ValuationMode> {
        match s {
            "parameter_sign" => Some(ValuationMode::ParameterSign),
            "update_sign" => Some(ValuationMode::UpdateSign),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ValuationMode::ParameterSign => "parameter_sign",
            ValuationMode::UpdateSign => "update_sign",
        }
    }
}

/// Handling of rounds whose k-window extends past the last round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Shrink the window to the rounds that exist (default; every round
    /// except the last gets scored).
    Truncate,
    /// Skip rounds without a full window.
    Drop,
}

impl TailPolicy {
    pub fn parse(s: &str) -> Option<TailPolicy> {
        match s {
            "truncate" => Some(TailPolicy::Truncate),
            "drop" => Some(TailPolicy::Drop),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TailPolicy::Truncate => "truncate",
            TailPolicy::Drop => "drop",
        }
    }
}

/// Valuation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationConfig {
    /// Window length k ≥ 1.
    pub window: usize,
    pub mode: ValuationMode,
    pub tail: TailPolicy,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        ValuationConfig {
            window: 2,
            mode: ValuationMode::ParameterSign,
            tail: TailPolicy::Truncate,
        }
    }
}

impl ValuationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Prunes one client update layer by layer. Exactly `⌊n_j·r/100⌋` indices
/// survive per layer, chosen by descending magnitude (or descending signed
/// value under [`Selection::ByValue`]) with ties broken by ascending index.
/// Survivors carry their sign under [`Clip::Sign`] or their raw value under
/// [`Clip::None`]; everything else is zero.
pub fn prune(delta: &LayeredParams, cfg: &PruneConfig) -> Result<LayeredParams> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(delta.n_layers());
    for layer in delta.layers() {
        let n = layer.values.len();
        if layer.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric(format!("prune: NaN in layer {:?}", layer.name)));
        }
        let m = cfg.keep_count(n);
        if m == 0 && n > 0 {
            // Routine for layers shorter than 100/r elements (e.g. small
            // bias vectors at the default ratio), hence debug, not a warning.
            log::debug!(
                "prune: layer {:?} ({} elements) keeps 0 at ratio {}%, zeroing it",
                layer.name,
                n,
                cfg.ratio_pct
            );
        }
        let mut idx: Vec<usize> = (0..n).collect();
        match cfg.selection {
            Selection::ByAbs => idx.sort_by(|&a, &b| {
                layer.values[b]
                    .abs()
                    .partial_cmp(&layer.values[a].abs())
                    .expect("NaN rejected above")
                    .then(a.cmp(&b))
            }),
            Selection::ByValue => idx.sort_by(|&a, &b| {
                layer.values[b]
                    .partial_cmp(&layer.values[a])
                    .expect("NaN rejected above")
                    .then(a.cmp(&b))
            }),
        }
        let mut values = vec![0.0; n];
        for &j in &idx[..m] {
            values[j] = match cfg.clip {
                Clip::Sign => sgn(layer.values[j]),
                Clip::None => layer.values[j],
            };
        }
        out.push(Layer {
            name: layer.name.clone(),
            values,
        });
    }
    Ok(LayeredParams::new(out))
}

/// Global movement over the `k` rounds after `t`: `U^{(t,k)} = Θ^{end} − Θ^t`
/// with `end = min(t+k, M)` under [`TailPolicy::Truncate`]. Under
/// [`TailPolicy::Drop`] the window must fit entirely. The telescoped
/// difference of stored globals is used directly, so the identity
/// `U^{(t,k)} = Θ^{t+k} − Θ^t` is exact.
pub fn global_window(
    logs: &[RoundLog],
    t: u32,
    k: usize,
    tail: TailPolicy,
) -> Result<LayeredParams> {
    let m = logs.len() as u32;
    if t < 1 || t > m {
        return Err(Error::Structure(format!("global_window: round {t} outside 1..={m}")));
    }
    let full_end = t as u64 + k as u64;
    let end = match tail {
        TailPolicy::Truncate => full_end.min(m as u64) as u32,
        TailPolicy::Drop => {
            if full_end > m as u64 {
                return Err(Error::EmptyWindow { t });
            }
            full_end as u32
        }
    };
    if end == t {
        return Err(Error::EmptyWindow { t });
    }
    let theta_t = &logs[t as usize - 1].global_after;
    let theta_end = &logs[end as usize - 1].global_after;
    theta_end.sub(theta_t)
}

/// Sign-agreement count over the global flat index:
/// `Σ_h sgn(a[h])·sgn(b[h])`. Always an exact integer.
pub fn signed_similarity(a: &LayeredParams, b: &LayeredParams) -> Result<f64> {
    if a.architecture() != b.architecture() {
        return Err(Error::ArchMismatch("signed_similarity operands differ".into()));
    }
    let mut total: i64 = 0;
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        for (&x, &y) in la.values.iter().zip(&lb.values) {
            if x.is_nan() || y.is_nan() {
                return Err(Error::Numeric(format!(
                    "signed_similarity: NaN in layer {:?}",
                    la.name
                )));
            }
            if x != 0.0 && y != 0.0 {
                total += if (x > 0.0) == (y > 0.0) { 1 } else { -1 };
            }
        }
    }
    Ok(total as f64)
}

/// Per-client scores for one round against a precomputed window.
///
/// `parameter_sign` compares the full local models `Θ^{t−1} + Δ_i`;
/// `update_sign` compares the pruned updates, recomputing them via
/// `prune_cfg` when the log was produced by plain aggregation.
pub fn value_round(
    log: &RoundLog,
    window: &LayeredParams,
    cfg: &ValuationConfig,
    prune_cfg: Option<&PruneConfig>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    match cfg.mode {
        ValuationMode::ParameterSign => log
            .updates
            .iter()
            .map(|d| signed_similarity(&log.global_before.add(d)?, window))
            .collect(),
        ValuationMode::UpdateSign => match (&log.pruned, prune_cfg) {
            (Some(pruned), _) => pruned
                .iter()
                .map(|d| signed_similarity(d, window))
                .collect(),
            (None, Some(pc)) => log
                .updates
                .iter()
                .map(|d| signed_similarity(&prune(d, pc)?, window))
                .collect(),
            (None, None) => Err(Error::Config(
                "update_sign valuation over plain logs needs a prune config".into(),
            )),
        },
    }
}

/// Per-client per-round scores with totals and rankings.
///
/// `scores[i]` is client `i+1`'s row over `rounds`; `totals` are row sums and
/// `rankings` follow the counting rule `r_i = |{j : P_j ≥ P_i}|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBoard {
    pub n_clients: usize,
    pub rounds: Vec<u32>,
    pub scores: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub rankings: Vec<usize>,
}

impl ScoreBoard {
    /// Builds a board from per-round columns (`per_round[c][i]` is client
    /// `i+1`'s score in round `rounds[c]`).
    pub fn from_rounds(
        n_clients: usize,
        rounds: Vec<u32>,
        per_round: Vec<Vec<f64>>,
    ) -> Result<ScoreBoard> {
        if per_round.len() != rounds.len() {
            return Err(Error::Structure(format!(
                "scoreboard: {} score columns for {} rounds",
                per_round.len(),
                rounds.len()
            )));
        }
        for col in &per_round {
            if col.len() != n_clients {
                return Err(Error::Structure(format!(
                    "scoreboard: column of {} scores for {n_clients} clients",
                    col.len()
                )));
            }
        }
        let scores: Vec<Vec<f64>> = (0..n_clients)
            .map(|i| per_round.iter().map(|col| col[i]).collect())
            .collect();
        let totals: Vec<f64> = scores.iter().map(|row| row.iter().sum()).collect();
        let rankings = report::rank(&totals)?;
        Ok(ScoreBoard {
            n_clients,
            rounds,
            scores,
            totals,
            rankings,
        })
    }
}

/// Scores every eligible round of a run and assembles the [`ScoreBoard`].
///
/// Under [`TailPolicy::Truncate`] rounds `1..M−1` are scored (the last round
/// has no future); under [`TailPolicy::Drop`] only rounds with a full window,
/// `1..M−k`. Rounds are valued independently and in parallel.
pub fn assess(
    logs: &[RoundLog],
    prune_cfg: Option<&PruneConfig>,
    cfg: &ValuationConfig,
) -> Result<ScoreBoard> {
    cfg.validate()?;
    if logs.is_empty() {
        return Err(Error::Structure("assess: no rounds".into()));
    }
    for (e, log) in logs.iter().enumerate() {
        if log.round != e as u32 + 1 {
            return Err(Error::CorruptLog(format!(
                "assess: log {} claims round {}",
                e,
                log.round
            )));
        }
    }
    let n_clients = logs[0].updates.len();
    let m = logs.len() as u32;
    let last_scored = match cfg.tail {
        TailPolicy::Truncate => m.saturating_sub(1),
        TailPolicy::Drop => (m as i64 - cfg.window as i64).max(0) as u32,
    };
    let rounds: Vec<u32> = (1..=last_scored).collect();
    let per_round: Vec<Vec<f64>> = rounds
        .par_iter()
        .map(|&t| {
            let window = global_window(logs, t, cfg.window, cfg.tail)?;
            value_round(&logs[t as usize - 1], &window, cfg, prune_cfg)
        })
        .collect::<Result<_>>()?;
    ScoreBoard::from_rounds(n_clients, rounds, per_round)
}

#[cfg(test)]
impl PruneConfig {
    fn clone_with_alpha(&self, alpha: f64) -> PruneConfig {
        PruneConfig { alpha, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{aggregate_round, AggregationMode};
    use proptest::prelude::*;

    fn p(values: Vec<f64>) -> LayeredParams {
        LayeredParams::from_values(vec![("w", values)])
    }

    fn cfg(ratio: f64) -> PruneConfig {
        PruneConfig {
            ratio_pct: ratio,
            ..PruneConfig::default()
        }
    }

    #[test]
    fn prune_keeps_the_two_largest_magnitudes() {
        let delta = p(vec![0.5, -0.3, 0.1, 0.05]);
        let out = prune(&delta, &cfg(50.0)).unwrap();
        assert_eq!(out.flatten(), vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn prune_zero_update_stays_zero() {
        let delta = p(vec![0.0; 6]);
        let out = prune(&delta, &cfg(100.0)).unwrap();
        assert_eq!(out.flatten(), vec![0.0; 6]);
    }

    #[test]
    fn prune_full_ratio_is_pure_sign_quantization() {
        let delta = p(vec![0.2, -7.0, 0.0, 1e-9]);
        let out = prune(&delta, &cfg(100.0)).unwrap();
        assert_eq!(out.flatten(), vec![1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn prune_rounds_the_keep_count_down() {
        // 10 elements at 25% keeps floor(2.5) = 2.
        let delta = p((1..=10).map(|v| v as f64).collect());
        let out = prune(&delta, &cfg(25.0)).unwrap();
        let kept = out.flatten().iter().filter(|&&v| v != 0.0).count();
        assert_eq!(kept, 2);
        // The survivors are the two largest, indices 8 and 9.
        assert_eq!(out.flatten()[8..], [1.0, 1.0]);
    }

    #[test]
    fn prune_breaks_ties_towards_lower_index() {
        let delta = p(vec![0.5, -0.5, 0.5, 0.5]);
        let out = prune(&delta, &cfg(50.0)).unwrap();
        assert_eq!(out.flatten(), vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn prune_by_value_takes_the_most_positive() {
        let delta = p(vec![0.5, -0.9, 0.3, -0.1]);
        let by_value = PruneConfig {
            selection: Selection::ByValue,
            ..cfg(50.0)
        };
        let out = prune(&delta, &by_value).unwrap();
        assert_eq!(out.flatten(), vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn prune_without_clipping_keeps_raw_values() {
        let delta = p(vec![0.5, -0.3, 0.1, 0.05]);
        let no_clip = PruneConfig {
            clip: Clip::None,
            ..cfg(50.0)
        };
        let out = prune(&delta, &no_clip).unwrap();
        assert_eq!(out.flatten(), vec![0.5, -0.3, 0.0, 0.0]);
    }

    #[test]
    fn prune_handles_empty_and_starved_layers() {
        let delta = LayeredParams::from_values(vec![("w", vec![1.0, -2.0]), ("b", vec![])]);
        let out = prune(&delta, &cfg(100.0)).unwrap();
        assert_eq!(out.layer(1).values.len(), 0);
        // 2 elements at 10% keeps floor(0.2) = 0: the layer is zeroed.
        let starved = prune(&delta, &cfg(10.0)).unwrap();
        assert_eq!(starved.layer(0).values, vec![0.0, 0.0]);
    }

    #[test]
    fn prune_rejects_nan_and_bad_configs() {
        assert!(matches!(prune(&p(vec![f64::NAN]), &cfg(50.0)), Err(Error::Numeric(_))));
        assert!(matches!(prune(&p(vec![1.0]), &cfg(0.0)), Err(Error::Config(_))));
        assert!(matches!(prune(&p(vec![1.0]), &cfg(101.0)), Err(Error::Config(_))));
        let bad_alpha = PruneConfig { alpha: 0.0, ..cfg(10.0) };
        assert!(matches!(prune(&p(vec![1.0]), &bad_alpha), Err(Error::Config(_))));
    }

    fn three_round_logs() -> Vec<RoundLog> {
        // Hand-built: globals move by +1 in coordinate 0 each round, by -1 in
        // coordinate 1 in round 2 only.
        let g0 = p(vec![0.0, 0.0]);
        let g1 = p(vec![1.0, 0.0]);
        let g2 = p(vec![2.0, -1.0]);
        let g3 = p(vec![3.0, -1.0]);
        let mk = |t: u32, before: &LayeredParams, after: &LayeredParams| RoundLog {
            round: t,
            global_before: before.clone(),
            updates: vec![p(vec![0.1, 0.1])],
            pruned: Some(vec![p(vec![1.0, 1.0])]),
            global_after: after.clone(),
        };
        vec![mk(1, &g0, &g1), mk(2, &g1, &g2), mk(3, &g2, &g3)]
    }

    #[test]
    fn window_of_one_is_the_next_global_update() {
        let logs = three_round_logs();
        let u = global_window(&logs, 1, 1, TailPolicy::Truncate).unwrap();
        assert_eq!(u.flatten(), vec![1.0, -1.0]);
    }

    #[test]
    fn window_telescopes_to_global_difference() {
        let logs = three_round_logs();
        let u = global_window(&logs, 1, 2, TailPolicy::Truncate).unwrap();
        assert_eq!(u.flatten(), vec![2.0, -1.0]);
    }

    #[test]
    fn window_truncates_at_the_last_round() {
        let logs = three_round_logs();
        // t=2, k=5: only round 3 exists.
        let u = global_window(&logs, 2, 5, TailPolicy::Truncate).unwrap();
        assert_eq!(u.flatten(), vec![1.0, 0.0]);
    }

    #[test]
    fn window_at_the_final_round_is_empty() {
        let logs = three_round_logs();
        assert!(matches!(
            global_window(&logs, 3, 2, TailPolicy::Truncate),
            Err(Error::EmptyWindow { t: 3 })
        ));
        assert!(matches!(
            global_window(&logs, 2, 2, TailPolicy::Drop),
            Err(Error::EmptyWindow { t: 2 })
        ));
    }

    #[test]
    fn signed_similarity_matches_scalar_oracle() {
        let theta = p(vec![1.0, -2.0, 0.5]);
        let u = p(vec![0.3, -0.1, -0.4]);
        // By hand: +1 (both positive) +1 (both negative) -1 (opposite) = 1.
        assert_eq!(signed_similarity(&theta, &u).unwrap(), 1.0);
        let zero = p(vec![0.0, 0.0, 0.0]);
        assert_eq!(signed_similarity(&theta, &zero).unwrap(), 0.0);
    }

    #[test]
    fn scores_are_invariant_under_positive_scaling() {
        let theta = p(vec![0.4, -0.8, 0.0, 2.0]);
        let u = p(vec![-0.5, -0.25, 1.0, 0.125]);
        let base = signed_similarity(&theta, &u).unwrap();
        for c in [0.5, 3.0, 1e6] {
            assert_eq!(signed_similarity(&theta.scale(c), &u).unwrap(), base);
        }
    }

    #[test]
    fn hand_built_two_round_board() {
        // Two clients, 4 parameters, k=1, truncate: only round 1 is scored.
        let g0 = p(vec![0.2, -0.1, 0.0, 0.4]);
        let alpha = 0.5;
        let mode = AggregationMode::Pruned(cfg(50.0).clone_with_alpha(alpha));
        let locals1 = vec![
            g0.add(&p(vec![0.5, -0.3, 0.1, 0.05])).unwrap(),
            g0.add(&p(vec![-0.2, 0.4, -0.6, 0.1])).unwrap(),
        ];
        let log1 = aggregate_round(1, &g0, &locals1, &mode).unwrap();
        let g1 = log1.global_after.clone();
        let locals2 = vec![
            g1.add(&p(vec![0.3, 0.3, -0.1, -0.2])).unwrap(),
            g1.add(&p(vec![0.2, -0.1, -0.4, -0.3])).unwrap(),
        ];
        let log2 = aggregate_round(2, &g1, &locals2, &mode).unwrap();
        let logs = vec![log1, log2.clone()];

        // U^(1,1) = Θ2 − Θ1 = (α/2)·(votes of round 2).
        // Round 2 votes: client 1 prunes [0.3,0.3,-0.1,-0.2] -> [1,1,0,0]
        // (ties at 0.3 keep indices 0,1); client 2 prunes [0.2,-0.1,-0.4,-0.3]
        // -> [0,0,-1,-1]. Sum = [1,1,-1,-1].
        let u = global_window(&logs, 1, 1, TailPolicy::Truncate).unwrap();
        for (got, want) in u.flatten().iter().zip([0.25, 0.25, -0.25, -0.25]) {
            assert!((got - want).abs() < 1e-12);
        }

        // parameter_sign: θ1 = [0.7,-0.4,0.1,0.45] -> signs [+,-,+,+] vs
        // [+,+,-,-] gives 1-1-1-1 = -2; θ2 = [0.0,0.3,-0.6,0.5] -> signs
        // [0,+,-,+] gives 0+1+1-1 = 1.
        let board = assess(
            &logs,
            None,
            &ValuationConfig {
                window: 1,
                mode: ValuationMode::ParameterSign,
                tail: TailPolicy::Truncate,
            },
        )
        .unwrap();
        assert_eq!(board.rounds, vec![1]);
        assert_eq!(board.scores, vec![vec![-2.0], vec![1.0]]);
        assert_eq!(board.totals, vec![-2.0, 1.0]);
        assert_eq!(board.rankings, vec![2, 1]);

        // update_sign: votes of round 1 are [1,-1,0,0] and [0,1,-1,-0...];
        // client 1: sgn=[1,-1,0,0] vs [+,+,-,-] = 1-1 = 0;
        // client 2 votes [0,1,-1,0]: 1-(-1)... = +1·1 + (-1)·(-1) = 2.
        let board = assess(
            &logs,
            None,
            &ValuationConfig {
                window: 1,
                mode: ValuationMode::UpdateSign,
                tail: TailPolicy::Truncate,
            },
        )
        .unwrap();
        assert_eq!(board.scores, vec![vec![0.0], vec![2.0]]);
        assert_eq!(board.rankings, vec![2, 1]);
    }

    #[test]
    fn symmetric_clients_tie() {
        let g0 = p(vec![0.1, 0.2, -0.3, 0.0]);
        let local = g0.add(&p(vec![0.4, -0.2, 0.6, -0.1])).unwrap();
        let mode = AggregationMode::Pruned(cfg(50.0).clone_with_alpha(0.1));
        let log1 = aggregate_round(1, &g0, &[local.clone(), local.clone()], &mode).unwrap();
        let g1 = log1.global_after.clone();
        let local2 = g1.add(&p(vec![0.1, 0.1, -0.2, 0.3])).unwrap();
        let log2 = aggregate_round(2, &g1, &[local2.clone(), local2], &mode).unwrap();
        let board = assess(&[log1, log2], None, &ValuationConfig::default()).unwrap();
        assert_eq!(board.totals[0], board.totals[1]);
        assert_eq!(board.rankings, vec![2, 2]);
    }

    #[test]
    fn update_sign_over_plain_logs_needs_a_prune_config() {
        let g0 = p(vec![0.1, -0.2]);
        let locals = vec![g0.add(&p(vec![0.3, 0.1])).unwrap()];
        let log1 = aggregate_round(1, &g0, &locals, &AggregationMode::Plain).unwrap();
        let g1 = log1.global_after.clone();
        let log2 =
            aggregate_round(2, &g1, &[g1.add(&p(vec![0.1, -0.1])).unwrap()], &AggregationMode::Plain)
                .unwrap();
        let logs = vec![log1, log2];
        let vcfg = ValuationConfig {
            window: 1,
            mode: ValuationMode::UpdateSign,
            tail: TailPolicy::Truncate,
        };
        assert!(matches!(assess(&logs, None, &vcfg), Err(Error::Config(_))));
        assert!(assess(&logs, Some(&cfg(100.0)), &vcfg).is_ok());
    }

    #[test]
    fn drop_policy_skips_tail_rounds() {
        let logs = three_round_logs();
        let vcfg = ValuationConfig {
            window: 2,
            mode: ValuationMode::ParameterSign,
            tail: TailPolicy::Drop,
        };
        let board = assess(&logs, None, &vcfg).unwrap();
        assert_eq!(board.rounds, vec![1]);
        let vcfg = ValuationConfig { tail: TailPolicy::Truncate, ..vcfg };
        let board = assess(&logs, None, &vcfg).unwrap();
        assert_eq!(board.rounds, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn prop_prune_counts_and_values(
            values in proptest::collection::vec(-1e3..1e3f64, 1..200),
            ratio in 0.5..100.0f64,
        ) {
            let delta = p(values.clone());
            let c = cfg(ratio);
            let out = prune(&delta, &c).unwrap();
            let flat = out.flatten();
            let m = c.keep_count(values.len());
            let kept: Vec<usize> = (0..flat.len()).filter(|&j| flat[j] != 0.0).collect();
            // Zero inputs among the selected also produce zero outputs, so
            // kept count can only fall below m by zero-valued selections.
            prop_assert!(kept.len() <= m);
            let zero_inputs = values.iter().filter(|&&v| v == 0.0).count();
            prop_assert!(kept.len() + zero_inputs >= m);
            prop_assert!(flat.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0));
            for &j in &kept {
                prop_assert_eq!(flat[j], sgn(values[j]));
            }
        }

        #[test]
        fn prop_selected_magnitudes_dominate(
            values in proptest::collection::vec(-1e3..1e3f64, 2..200),
            ratio in 1.0..100.0f64,
        ) {
            let delta = p(values.clone());
            let c = cfg(ratio);
            let m = c.keep_count(values.len());
            prop_assume!(m > 0 && m < values.len());
            let out = prune(&delta, &c).unwrap();
            let flat = out.flatten();
            // Reconstruct the selected set; random f64 values are distinct
            // and nonzero with probability one.
            let selected: Vec<usize> = (0..flat.len()).filter(|&j| flat[j] != 0.0).collect();
            let min_sel = selected
                .iter()
                .map(|&j| values[j].abs())
                .fold(f64::INFINITY, f64::min);
            let max_unsel = (0..values.len())
                .filter(|j| !selected.contains(j))
                .map(|j| values[j].abs())
                .fold(0.0, f64::max);
            prop_assert!(min_sel >= max_unsel);
        }

        #[test]
        fn prop_similarity_is_integer_bounded_and_scale_free(
            pairs in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..300),
            c in 0.001..1e6f64,
        ) {
            let a = p(pairs.iter().map(|&(x, _)| x).collect());
            let b = p(pairs.iter().map(|&(_, y)| y).collect());
            let s = signed_similarity(&a, &b).unwrap();
            prop_assert_eq!(s.fract(), 0.0);
            prop_assert!(s.abs() <= pairs.len() as f64);
            prop_assert_eq!(signed_similarity(&a.scale(c), &b).unwrap(), s);
            prop_assert_eq!(signed_similarity(&a, &b.scale(c)).unwrap(), s);
        }
    }
}
