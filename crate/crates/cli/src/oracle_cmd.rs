//! The `oracle` subcommand: brute-force reference computations.
//!
//! Each kind prints an independently derived result next to the library's
//! answer so golden comparisons are self-contained: definition-based rank
//! correlation over all permutations, permutation-average Shapley,
//! sort-based prune selection, and central finite differences. A disagreement
//! beyond the documented tolerance is itself an error.

use clap::{Args, Subcommand};
use rand::Rng;

use fedval_core::baselines;
use fedval_core::crossround::{self, Clip, Selection};
use fedval_core::error::{Error, Result};
use fedval_core::model;
use fedval_core::oracle;
use fedval_core::report;
use fedval_core::rng;
use fedval_core::synthdata;
use fedval_core::{ExperimentConfig, LayeredParams, PruneConfig};

#[derive(Args)]
pub struct OracleArgs {
    #[command(subcommand)]
    pub kind: OracleKind,
}

#[derive(Subcommand)]
pub enum OracleKind {
    /// Rank correlation of every permutation of 1..=n against the identity,
    /// from the definition (integer Pearson on ranks).
    Spearman {
        #[arg(long, default_value_t = 4)]
        n: usize,
    },
    /// Subset-enumeration Shapley vs permutation-average brute force on a
    /// seeded random value table.
    Shapley {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Analytic vs central-finite-difference gradients on the default
    /// architecture, batches screened to sit clear of the relu kink.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Coordinates sampled per case.
        #[arg(long, default_value_t = 200)]
        coords: usize,
    },
    /// Library prune selection vs sort-based reference on one random layer.
    Prune {
        #[arg(long, default_value_t = 64)]
        len: usize,
        /// Keep-ratio in percent.
        #[arg(long, default_value_t = 10.0)]
        ratio: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

pub fn cmd_oracle(args: OracleArgs) -> Result<()> {
    match args.kind {
        OracleKind::Spearman { n } => oracle_spearman(n),
        OracleKind::Shapley { n, seed } => oracle_shapley(n, seed),
        OracleKind::Gradcheck { cases, seed, coords } => oracle_gradcheck(cases, seed, coords),
        OracleKind::Prune { len, ratio, seed } => oracle_prune(len, ratio, seed),
    }
}

/// All permutations of 1..=n in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in 1..=n {
            if !used[v - 1] {
                used[v - 1] = true;
                cur.push(v);
                go(n, cur, used, out);
                cur.pop();
                used[v - 1] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn oracle_spearman(n: usize) -> Result<()> {
    if !(2..=8).contains(&n) {
        return Err(Error::Config(format!(
            "n: {n} permutations are not enumerable here (need 2..=8)"
        )));
    }
    let identity: Vec<usize> = (1..=n).collect();
    let perms = permutations(n);
    let mut mismatches = 0usize;
    for perm in &perms {
        let reference = oracle::spearman_reference(&identity, perm)?;
        let library = report::spearman(&identity, perm)?;
        if library.to_bits() != reference.to_bits() {
            mismatches += 1;
        }
        let cells: Vec<String> = perm.iter().map(|r| r.to_string()).collect();
        println!("{}  {reference}", cells.join(" "));
    }
    println!(
        "library agreement: exact on {} of {} permutations",
        perms.len() - mismatches,
        perms.len()
    );
    if mismatches > 0 {
        return Err(Error::Numeric(format!(
            "rank correlation deviates from the definition on {mismatches} permutations"
        )));
    }
    Ok(())
}

fn oracle_shapley(n: usize, seed: u64) -> Result<()> {
    if !(1..=8).contains(&n) {
        return Err(Error::Config(format!(
            "n: permutation brute force handles 1..=8 clients, got {n}"
        )));
    }
    let mut r = rng::rng_from(seed);
    let table: Vec<f64> = (0..1u32 << n).map(|_| r.gen::<f64>()).collect();
    let exact = baselines::shapley_exact(n, |s| Ok(table[s as usize]))?;
    let brute = oracle::shapley_permutation(n, |s| Ok(table[s as usize]))?;
    let mut max_diff = 0.0f64;
    for i in 0..n {
        max_diff = max_diff.max((exact[i] - brute[i]).abs());
        println!("client {}: exact {:.17} brute {:.17}", i + 1, exact[i], brute[i]);
    }
    let grand = table[(1usize << n) - 1] - table[0];
    let efficiency_gap = (exact.iter().sum::<f64>() - grand).abs();
    println!("max_abs_diff {max_diff:e}");
    println!("efficiency_gap {efficiency_gap:e}");
    if max_diff > 1e-12 {
        return Err(Error::Numeric(format!(
            "Shapley enumerations disagree by {max_diff:e}"
        )));
    }
    Ok(())
}

fn oracle_gradcheck(cases: usize, seed: u64, coords: usize) -> Result<()> {
    let cfg = ExperimentConfig::default();
    let arch = cfg.model_arch();
    println!(
        "arch {}->{:?}->{} ({} parameters), h = 1e-5",
        arch.input_dim,
        arch.hidden_dims,
        arch.n_classes,
        arch.architecture().total_len()
    );
    let mut worst = 0.0f64;
    for case in 0..cases as u64 {
        let params = model::init_params(&arch, rng::derive2(seed, case, 0));
        // Deterministic scan for a batch whose hidden pre-activations all
        // clear the relu kink; h = 1e-5 perturbs each by far less than 1e-3.
        let mut batch = None;
        for k in 1..=100u64 {
            let cand = synthdata::generate_base(
                rng::derive2(seed, case, k),
                4,
                cfg.height,
                cfg.width,
                cfg.n_classes,
            )?;
            if model::kink_margin(&arch, &params, &cand) > 1e-3 {
                batch = Some(cand);
                break;
            }
        }
        let batch = batch.ok_or_else(|| {
            Error::Numeric(format!("case {case}: no batch clears the relu kink in 100 draws"))
        })?;
        let margin = model::kink_margin(&arch, &params, &batch);

        let total = params.total_len();
        let m = coords.clamp(1, total);
        let mut idx = rand::seq::index::sample(
            &mut rng::rng_from(rng::derive2(seed, case, 0xC0)),
            total,
            m,
        )
        .into_vec();
        idx.sort_unstable();

        let analytic = model::backward(&arch, &params, &batch)?.flatten();
        let numeric = oracle::finite_diff_grad(&arch, &params, &batch, &idx, 1e-5)?;
        let mut case_worst = 0.0f64;
        for (&j, &fd) in idx.iter().zip(&numeric) {
            let a = analytic[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-5);
            case_worst = case_worst.max(rel);
        }
        println!("case {case}: max_rel_err {case_worst:.3e} (kink margin {margin:.3e}, {m} coords)");
        worst = worst.max(case_worst);
    }
    println!("max_rel_err {worst:.3e} over {cases} cases");
    Ok(())
}

fn oracle_prune(len: usize, ratio: f64, seed: u64) -> Result<()> {
    let mut r = rng::rng_from(seed);
    let values: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
    let cfg = PruneConfig {
        ratio_pct: ratio,
        alpha: 1.0,
        selection: Selection::ByAbs,
        clip: Clip::Sign,
    };
    let m = cfg.keep_count(len);
    let reference = oracle::prune_reference_selected(&values, m);
    let pruned = crossround::prune(&LayeredParams::from_values(vec![("w", values)]), &cfg)?;
    let library: Vec<usize> = pruned
        .flatten()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect();
    println!("kept {m} of {len} at ratio {ratio}%");
    println!("reference {reference:?}");
    println!("library   {library:?}");
    println!("match {}", library == reference);
    if library != reference {
        return Err(Error::Numeric(
            "prune selection deviates from the sort-based reference".into(),
        ));
    }
    Ok(())
}
