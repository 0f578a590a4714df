//! Acceptance suite: one test per acceptance criterion, each printing a
//! single `[cNN] ... pass|FAIL` line (visible with `--nocapture`).
//!
//! The two 5-seed trend experiments run once through the compiled binary and
//! are shared by every criterion that needs them; their outputs live under
//! `target/acceptance-scratch/`, which is wiped at the start of each suite
//! run.

mod common;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use common::{fedval, permutations, run_ok, stdout_of};
use fedval_core::baselines::{self, RoundCtx};
use fedval_core::crossround::{self, Clip, Selection};
use fedval_core::engine::RoundLog;
use fedval_core::params::Layer;
use fedval_core::report;
use fedval_core::rng::rng_from;
use fedval_core::storage::{self, Manifest};
use fedval_core::{ExperimentConfig, LayeredParams, PruneConfig, ValuationConfig};

/// Runs one criterion body, printing exactly one pass/fail line either way.
fn criterion<F>(id: &str, what: &str, body: F)
where
    F: FnOnce() + std::panic::UnwindSafe,
{
    let result = std::panic::catch_unwind(body);
    match &result {
        Ok(()) => println!("[{id}] {what}: pass"),
        Err(_) => println!("[{id}] {what}: FAIL"),
    }
    if let Err(payload) = result {
        std::panic::resume_unwind(payload);
    }
}

/// Scratch space under target/, wiped once per suite run.
fn scratch_root() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-scratch");
        let _ = std::fs::remove_dir_all(&root);
        std::fs::create_dir_all(&root).expect("scratch root creates");
        root.canonicalize().expect("scratch root resolves")
    })
}

struct Trend {
    root: PathBuf,
    summary: serde_json::Value,
    elapsed: Duration,
}

/// One 5-seed trend run through the binary, restricted to a single worker
/// thread so the per-seed runtime bound is measured on one core.
fn trend(setting: &'static str) -> &'static Trend {
    static QUANTITY: OnceLock<Trend> = OnceLock::new();
    static NOISE: OnceLock<Trend> = OnceLock::new();
    let cell = match setting {
        "quantity" => &QUANTITY,
        "noise" => &NOISE,
        _ => unreachable!("only the two trend settings are cached"),
    };
    cell.get_or_init(|| {
        let root = scratch_root().join(format!("trend_{setting}"));
        let started = Instant::now();
        run_ok(
            fedval()
                .args(["run", "--seeds", "5", "--jobs", "1", "--setting", setting, "--dump-data"])
                .arg("--out")
                .arg(&root),
        );
        let elapsed = started.elapsed();
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(root.join("summary.json")).expect("summary exists"),
        )
        .expect("summary parses");
        Trend { root, summary, elapsed }
    })
}

fn mean_rho(t: &Trend, method: &str) -> f64 {
    t.summary["mean_rho"][method]
        .as_f64()
        .unwrap_or_else(|| panic!("summary lacks mean rho for {method}"))
}

fn seed_rhos(t: &Trend, method: &str) -> Vec<f64> {
    t.summary["per_seed"]
        .as_array()
        .expect("per-seed table")
        .iter()
        .map(|s| s["rho"][method].as_f64().expect("per-seed rho"))
        .collect()
}

/// The quantity trend's seed-1 run, replayed from disk.
fn quantity_seed1() -> &'static (Manifest, Vec<RoundLog>) {
    static LOGS: OnceLock<(Manifest, Vec<RoundLog>)> = OnceLock::new();
    LOGS.get_or_init(|| {
        let dir = trend("quantity").root.join("seed_1");
        storage::replay(&dir).expect("seed_1 replays")
    })
}

/// Rebuilds the experiment config from a manifest's config echo.
fn config_from(manifest: &Manifest) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (key, value) in &manifest.config {
        cfg.apply_kv(key, value).expect("manifest echoes a valid config");
    }
    cfg
}

fn random_params(r: &mut impl Rng, shapes: &[usize]) -> LayeredParams {
    LayeredParams::new(
        shapes
            .iter()
            .enumerate()
            .map(|(i, &len)| Layer {
                name: format!("l{i}"),
                values: (0..len)
                    .map(|_| if r.gen_bool(0.2) { 0.0 } else { r.gen_range(-3.0..3.0) })
                    .collect(),
            })
            .collect(),
    )
}

#[test]
fn c01_pruning_invariants() {
    criterion("c01", "pruning invariants on 1000 random layers", || {
        let started = Instant::now();
        let mut r = rng_from(0xC01);
        for case in 0..1000 {
            let n: usize = r.gen_range(1..=4096);
            let ratio = r.gen_range(0.01..=100.0f64);
            let values: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
            let cfg = PruneConfig {
                ratio_pct: ratio,
                alpha: 0.02,
                selection: Selection::ByAbs,
                clip: Clip::Sign,
            };
            let m = cfg.keep_count(n);
            assert_eq!(m, (n as f64 * ratio / 100.0).floor() as usize, "case {case}: keep count");

            let delta = LayeredParams::from_values(vec![("w", values.clone())]);
            let flat = crossround::prune(&delta, &cfg).unwrap().flatten();
            assert!(
                flat.iter().all(|v| *v == -1.0 || *v == 0.0 || *v == 1.0),
                "case {case}: non-ternary output"
            );
            let kept: Vec<usize> = flat
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, _)| j)
                .collect();
            assert_eq!(kept.len(), m, "case {case}: selected count");

            // Dominance: every selected magnitude at least every unselected
            // one. Uniform draws are tie-free almost surely.
            let mut is_kept = vec![false; n];
            for &j in &kept {
                is_kept[j] = true;
            }
            let min_sel = kept.iter().map(|&j| values[j].abs()).fold(f64::INFINITY, f64::min);
            let max_unsel = (0..n)
                .filter(|&j| !is_kept[j])
                .map(|j| values[j].abs())
                .fold(0.0f64, f64::max);
            if m > 0 && m < n {
                assert!(min_sel >= max_unsel, "case {case}: dominance violated");
            }
            assert_eq!(
                kept,
                fedval_core::oracle::prune_reference_selected(&values, m),
                "case {case}: selection differs from the sort-based reference"
            );
        }
        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(5), "1000 layers took {elapsed:?}");
    });
}

#[test]
fn c02_aggregation_identity() {
    criterion("c02", "aggregation identity and integer voting on every logged round", || {
        let (manifest, logs) = quantity_seed1();
        let cfg = config_from(manifest);
        let n = cfg.n_clients as f64;
        assert_eq!(logs.len(), 60, "default run logs all rounds");
        for log in logs {
            let pruned = log.pruned.as_ref().expect("pruned aggregation logs votes");
            let mut vote = pruned[0].clone();
            for p in &pruned[1..] {
                vote = vote.add(p).unwrap();
            }
            let rebuilt = log.global_before.add(&vote.scale(cfg.alpha / n)).unwrap();
            let gap = rebuilt.sub(&log.global_after).unwrap().linf_norm();
            assert!(gap <= 1e-12, "round {}: identity gap {gap:e}", log.round);

            // Each global step coordinate must be (alpha/N) times an integer
            // vote in [-N, N].
            let step = log.global_after.sub(&log.global_before).unwrap();
            for v in step.flatten() {
                let votes = v * n / cfg.alpha;
                assert!(
                    (votes - votes.round()).abs() <= 1e-9,
                    "round {}: non-integer vote {votes}",
                    log.round
                );
                assert!(votes.round().abs() <= n, "round {}: vote {votes} out of range", log.round);
            }
        }
    });
}

#[test]
fn c03_gradient_check() {
    criterion("c03", "analytic vs finite-difference gradients on the default architecture", || {
        let out = run_ok(fedval().args(["oracle", "gradcheck", "--cases", "20", "--seed", "11"]));
        let stdout = stdout_of(&out);
        let cases = stdout.lines().filter(|l| l.starts_with("case ")).count();
        assert!(cases >= 20, "only {cases} cases ran");
        let footer = stdout
            .lines()
            .rev()
            .find(|l| l.starts_with("max_rel_err"))
            .expect("summary line");
        let worst: f64 = footer.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(worst <= 1e-4, "max relative error {worst:e}");
    });
}

#[test]
fn c04_spearman_oracle() {
    criterion("c04", "rank correlation equals the definition-based oracle", || {
        let identity: Vec<usize> = (1..=5).collect();
        let perms = permutations(5);
        assert_eq!(perms.len(), 120);
        for perm in &perms {
            let lib = report::spearman(&identity, perm).unwrap();
            let orc = fedval_core::oracle::spearman_reference(&identity, perm).unwrap();
            assert_eq!(lib.to_bits(), orc.to_bits(), "perm {perm:?}: {lib} vs {orc}");
        }
        for n in 2..=7usize {
            let fwd: Vec<usize> = (1..=n).collect();
            let rev: Vec<usize> = (1..=n).rev().collect();
            assert_eq!(report::spearman(&fwd, &fwd).unwrap(), 1.0, "n={n}");
            assert_eq!(report::spearman(&fwd, &rev).unwrap(), -1.0, "n={n}");
        }
    });
}

#[test]
fn c05_shapley_correctness() {
    criterion("c05", "Shapley vs permutation brute force, efficiency, hand case", || {
        // 50 random value tables against the permutation average.
        let mut r = rng_from(0xC05);
        for case in 0..50 {
            let n: usize = r.gen_range(2..=5);
            let table: Vec<f64> = (0..1u32 << n).map(|_| r.gen::<f64>()).collect();
            let exact = baselines::shapley_exact(n, |s| Ok(table[s as usize])).unwrap();
            let brute =
                fedval_core::oracle::shapley_permutation(n, |s| Ok(table[s as usize])).unwrap();
            for i in 0..n {
                let gap = (exact[i] - brute[i]).abs();
                assert!(gap <= 1e-12, "case {case}, client {i}: gap {gap:e}");
            }
        }

        // Efficiency on every round of the real experiment.
        let (manifest, logs) = quantity_seed1();
        let cfg = config_from(manifest);
        let arch = cfg.model_arch();
        let (_, validation, _, _) =
            storage::read_datasets(&trend("quantity").root.join("seed_1/datasets.bin")).unwrap();
        let full = (1u32 << cfg.n_clients) - 1;
        for log in logs {
            let ctx = RoundCtx::from_log(&arch, log, &validation);
            let phi = baselines::shapley_round(&ctx).unwrap();
            let grand = baselines::coalition_value(&ctx, full).unwrap()
                - baselines::coalition_value(&ctx, 0).unwrap();
            let gap = (phi.iter().sum::<f64>() - grand).abs();
            assert!(gap <= 1e-9, "round {}: efficiency gap {gap:e}", log.round);
        }

        // Two-client hand case; 0.3 itself is not representable, the sum
        // lands one ulp above it.
        let v = [0.0, 0.6, 0.4, 0.8];
        let phi = baselines::shapley_exact(2, |s| Ok(v[s as usize])).unwrap();
        assert_eq!(phi[0], 0.5);
        assert!((phi[1] - 0.3).abs() <= f64::EPSILON, "phi_2 = {}", phi[1]);
    });
}

#[test]
fn c06_quantity_trend() {
    criterion("c06", "quantity setting: cross-round mean rho over 5 seeds", || {
        let t = trend("quantity");
        assert!(
            t.elapsed <= Duration::from_secs(5 * 300),
            "5-seed run took {:?}, over the one-core budget",
            t.elapsed
        );
        let mean = mean_rho(t, "cross_round");
        assert!(mean >= 0.7, "quantity mean rho {mean} < 0.7 (per seed: {:?})",
            seed_rhos(t, "cross_round"));
    });
}

#[test]
fn c07_noise_trend() {
    criterion("c07", "noise setting: cross-round mean rho over 5 seeds", || {
        let t = trend("noise");
        assert!(
            t.elapsed <= Duration::from_secs(5 * 300),
            "5-seed run took {:?}, over the one-core budget",
            t.elapsed
        );
        let mean = mean_rho(t, "cross_round");
        assert!(mean >= 0.6, "noise mean rho {mean} < 0.6 (per seed: {:?})",
            seed_rhos(t, "cross_round"));
    });
}

#[test]
fn c08_comparative_trend() {
    criterion("c08", "cross-round vs gradient-cosine over both settings", || {
        let mut cross = seed_rhos(trend("quantity"), "cross_round");
        cross.extend(seed_rhos(trend("noise"), "cross_round"));
        let mut cgsv = seed_rhos(trend("quantity"), "cgsv");
        cgsv.extend(seed_rhos(trend("noise"), "cgsv"));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mc, mg) = (mean(&cross), mean(&cgsv));
        assert!(mc >= mg - 0.05, "cross-round mean {mc} below cgsv mean {mg} - 0.05");
    });
}

#[test]
fn c09_window_ablation() {
    criterion("c09", "window ablation via offline assess, no retraining", || {
        let dir = trend("quantity").root.join("seed_1");
        let rounds_dir = dir.join("rounds");
        let before = snapshot_mtimes(&rounds_dir);

        let mut rhos = Vec::new();
        for k in [1usize, 2, 5, 10] {
            let started = Instant::now();
            let out = run_ok(
                fedval()
                    .arg("assess")
                    .arg(&dir)
                    .args(["--window", &k.to_string()]),
            );
            let elapsed = started.elapsed();
            let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
            assert_eq!(doc["window"].as_u64(), Some(k as u64));
            rhos.push(doc["rho"].as_f64().expect("assessment rho"));
            // Re-scoring 60 logged rounds is near-instant; a retrain of this
            // config takes over ten seconds on this class of machine.
            assert!(elapsed < Duration::from_secs(10), "assess k={k} took {elapsed:?}");
        }
        assert_eq!(snapshot_mtimes(&rounds_dir), before, "assess modified the logs");

        let min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max > min, "degenerate rho spread across windows: {rhos:?}");
    });
}

fn snapshot_mtimes(dir: &Path) -> Vec<(String, std::time::SystemTime)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                e.metadata().unwrap().modified().unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

/// All files under `root` as sorted (relative path, bytes) pairs.
fn snapshot_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn c10_determinism() {
    criterion("c10", "identical config and seed give byte-identical outputs", || {
        let conf = scratch_root().join("determinism.conf");
        std::fs::write(&conf, "rounds = 12\nn_train = 600\nn_val = 120\nseeds = 2\n").unwrap();
        let root = scratch_root().join("determinism_out");

        let run = || {
            let _ = std::fs::remove_dir_all(&root);
            run_ok(
                fedval()
                    .args(["run", "--dump-data", "--config"])
                    .arg(&conf)
                    .arg("--out")
                    .arg(&root),
            );
            snapshot_files(&root)
        };
        let first = run();
        let second = run();

        assert!(first.iter().any(|(p, _)| p.ends_with("report.json")));
        assert!(first.iter().any(|(p, _)| p.contains("rounds")));
        assert_eq!(
            first.iter().map(|(p, _)| p).collect::<Vec<_>>(),
            second.iter().map(|(p, _)| p).collect::<Vec<_>>(),
            "file sets differ"
        );
        for ((path, a), (_, b)) in first.iter().zip(&second) {
            assert_eq!(a, b, "bytes differ for {path}");
        }
    });
}

#[test]
fn c11_valuation_properties() {
    criterion("c11", "sign-valuation invariances on 200 randomized cases", || {
        let mut r = rng_from(0xC11);

        // Scale invariance, integer-valuedness, and the dimension bound.
        for case in 0..200 {
            let n_layers = r.gen_range(1..=3usize);
            let shapes: Vec<usize> = (0..n_layers).map(|_| r.gen_range(1..=40)).collect();
            let theta = random_params(&mut r, &shapes);
            let window = random_params(&mut r, &shapes);

            let p = crossround::signed_similarity(&theta, &window).unwrap();
            assert_eq!(p, p.round(), "case {case}: non-integer score {p}");
            assert!(
                p.abs() <= theta.total_len() as f64,
                "case {case}: |{p}| exceeds the {} coordinates",
                theta.total_len()
            );
            let c_theta = r.gen_range(1e-3..1e3f64);
            let c_window = r.gen_range(1e-3..1e3f64);
            assert_eq!(
                crossround::signed_similarity(&theta.scale(c_theta), &window).unwrap(),
                p,
                "case {case}: not invariant to scaling the local model"
            );
            assert_eq!(
                crossround::signed_similarity(&theta, &window.scale(c_window)).unwrap(),
                p,
                "case {case}: not invariant to scaling the window"
            );
            assert_eq!(
                p,
                fedval_core::oracle::signed_match_reference(&theta.flatten(), &window.flatten())
                    .unwrap(),
                "case {case}: deviates from the scalar reference"
            );
        }

        // Client-permutation equivariance of per-round valuation.
        for case in 0..200 {
            let n_clients = r.gen_range(2..=6usize);
            let shapes = vec![r.gen_range(5..=50usize)];
            let global = random_params(&mut r, &shapes);
            let updates: Vec<LayeredParams> =
                (0..n_clients).map(|_| random_params(&mut r, &shapes)).collect();
            let window = random_params(&mut r, &shapes);
            let log = RoundLog {
                round: 1,
                global_before: global.clone(),
                updates: updates.clone(),
                pruned: None,
                global_after: global.clone(),
            };
            let cfg = ValuationConfig::default();
            let scores = crossround::value_round(&log, &window, &cfg, None).unwrap();

            let mut perm: Vec<usize> = (0..n_clients).collect();
            perm.shuffle(&mut r);
            let permuted_log = RoundLog {
                round: 1,
                global_before: global.clone(),
                updates: perm.iter().map(|&j| updates[j].clone()).collect(),
                pruned: None,
                global_after: global,
            };
            let permuted = crossround::value_round(&permuted_log, &window, &cfg, None).unwrap();
            for (i, &j) in perm.iter().enumerate() {
                assert_eq!(
                    permuted[i], scores[j],
                    "case {case}: score moved under client permutation"
                );
            }
        }
    });
}
