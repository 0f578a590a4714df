//! Validation-based and gradient-based reference contribution methods.
//!
//! The coalition value of a client subset S in round t is the validation
//! accuracy of the subset-aggregated model `Θ^{t−1} + (1/|S|)·Σ_{i∈S} Δ_i`
//! (the previous global model for the empty coalition). On top of it:
//!
//! - exact per-round Shapley value by enumeration over all 2^N subsets with
//!   a per-subset value cache (N ≤ 12);
//! - leave-one-out: `v(C) − v(C\{i})`;
//! - gradient cosine: cosine of a client's raw update against the summed
//!   update of the round (no validation data needed).
//!
//! Per-round scores are summed across rounds into the same score-board shape
//! the cross-round method uses, so every method is compared on one surface.

use rayon::prelude::*;

use crate::crossround::ScoreBoard;
use crate::engine::RoundLog;
use crate::error::{Error, Result};
use crate::model::{self, ModelArch};
use crate::params::LayeredParams;
use crate::synthdata::Sample;

/// Exact-enumeration client bound: 2^12 coalition evaluations per round.
pub const MAX_EXACT_CLIENTS: usize = 12;

/// One round's inputs for the validation-based methods.
pub struct RoundCtx<'a> {
    pub arch: &'a ModelArch,
    pub global_before: &'a LayeredParams,
    pub updates: &'a [LayeredParams],
    pub validation: &'a [Sample],
}

impl<'a> RoundCtx<'a> {
    pub fn from_log(arch: &'a ModelArch, log: &'a RoundLog, validation: &'a [Sample]) -> Self {
        RoundCtx {
            arch,
            global_before: &log.global_before,
            updates: &log.updates,
            validation,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.updates.len()
    }
}

/// Validation accuracy of the subset-aggregated model. `subset` is a client
/// bitmask (bit i = client i+1); the empty subset scores the previous global
/// model.
pub fn coalition_value(ctx: &RoundCtx, subset: u32) -> Result<f64> {
    if subset == 0 {
        return Ok(model::accuracy(ctx.arch, ctx.global_before, ctx.validation));
    }
    let mut sum: Option<LayeredParams> = None;
    for (i, delta) in ctx.updates.iter().enumerate() {
        if subset & (1 << i) != 0 {
            sum = Some(match sum {
                None => delta.clone(),
                Some(acc) => acc.add(delta)?,
            });
        }
    }
    let sum = sum.expect("nonzero subset");
    let aggregated = ctx
        .global_before
        .add(&sum.scale(1.0 / subset.count_ones() as f64))?;
    Ok(model::accuracy(ctx.arch, &aggregated, ctx.validation))
}

/// Exact Shapley values for an arbitrary coalition value function over `n`
/// players: `φ_i = Σ_{S ⊆ C\{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`,
/// enumerating all 2^n subsets once and caching their values.
pub fn shapley_exact<F>(n: usize, mut v: F) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::Structure("shapley: zero players".into()));
    }
    if n > MAX_EXACT_CLIENTS {
        return Err(Error::Capability(format!(
            "exact Shapley enumerates 2^{n} coalitions; the supported bound is \
             {MAX_EXACT_CLIENTS} clients. Use a sampling approximation (not provided) or fewer \
             clients."
        )));
    }
    let full = 1u32 << n;
    let mut cache = Vec::with_capacity(full as usize);
    for mask in 0..full {
        cache.push(v(mask)?);
    }

    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    // weight[s] for a subset of size s among the other n-1 players.
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - 1 - s] / fact[n]).collect();

    let mut phi = vec![0.0; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let bit = 1u32 << i;
        for mask in 0..full {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *phi_i += weight[s] * (cache[(mask | bit) as usize] - cache[mask as usize]);
            }
        }
    }
    Ok(phi)
}

/// Per-round Shapley over validation accuracy.
pub fn shapley_round(ctx: &RoundCtx) -> Result<Vec<f64>> {
    shapley_exact(ctx.n_clients(), |mask| coalition_value(ctx, mask))
}

/// Leave-one-out: `v(C) − v(C\{i})` per client.
pub fn leave_one_out_round(ctx: &RoundCtx) -> Result<Vec<f64>> {
    let n = ctx.n_clients();
    if n == 0 {
        return Err(Error::Structure("leave-one-out: zero clients".into()));
    }
    if n > 32 {
        return Err(Error::Capability("leave-one-out bitmasks support up to 32 clients".into()));
    }
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let v_full = coalition_value(ctx, full)?;
    (0..n)
        .map(|i| Ok(v_full - coalition_value(ctx, full & !(1 << i))?))
        .collect()
}

/// Gradient cosine: `cos(Δ_i, Σ_j Δ_j)` over flattened updates; either side
/// zero gives 0.
pub fn cgsv_round(updates: &[LayeredParams]) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::Structure("gradient cosine: zero clients".into()));
    }
    let mut sum = updates[0].clone();
    for d in &updates[1..] {
        sum = sum.add(d)?;
    }
    let sum_norm = sum.l2_norm();
    updates
        .iter()
        .map(|d| {
            let norm = d.l2_norm();
            if norm == 0.0 || sum_norm == 0.0 {
                return Ok(0.0);
            }
            Ok(d.dot(&sum)? / (norm * sum_norm))
        })
        .collect()
}

/// Sums per-round scores into a score board (same shape as the cross-round
/// method's board).
pub fn accumulate(
    n_clients: usize,
    rounds: Vec<u32>,
    per_round: Vec<Vec<f64>>,
) -> Result<ScoreBoard> {
    ScoreBoard::from_rounds(n_clients, rounds, per_round)
}

/// Runs one validation-based or gradient method over every logged round.
pub fn score_all_rounds<F>(logs: &[RoundLog], mut per_round: F) -> Result<ScoreBoard>
where
    F: FnMut(&RoundLog) -> Result<Vec<f64>>,
{
    if logs.is_empty() {
        return Err(Error::Structure("score_all_rounds: no rounds".into()));
    }
    let n_clients = logs[0].updates.len();
    let rounds: Vec<u32> = logs.iter().map(|l| l.round).collect();
    let scores = logs.iter().map(&mut per_round).collect::<Result<Vec<_>>>()?;
    accumulate(n_clients, rounds, scores)
}

/// As [`score_all_rounds`] but rounds are scored in parallel.
pub fn score_all_rounds_par<F>(logs: &[RoundLog], per_round: F) -> Result<ScoreBoard>
where
    F: Fn(&RoundLog) -> Result<Vec<f64>> + Sync + Send,
{
    if logs.is_empty() {
        return Err(Error::Structure("score_all_rounds: no rounds".into()));
    }
    let n_clients = logs[0].updates.len();
    let rounds: Vec<u32> = logs.iter().map(|l| l.round).collect();
    let scores = logs.par_iter().map(per_round).collect::<Result<Vec<_>>>()?;
    accumulate(n_clients, rounds, scores)
}
