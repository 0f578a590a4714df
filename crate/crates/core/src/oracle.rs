//! Brute-force reference implementations for golden-value testing.
//!
//! Everything here trades speed for obviousness: rank correlation evaluated
//! as integer Pearson on ranks, Shapley by full permutation enumeration,
//! pruning selection by sorting, gradients by central finite differences,
//! sign similarity by a scalar loop. The fast paths elsewhere in the crate
//! are checked against these, never the other way around.

use crate::error::{Error, Result};
use crate::model::{self, ModelArch};
use crate::params::LayeredParams;
use crate::synthdata::Sample;

/// Rank correlation straight from the Pearson-on-ranks definition.
///
/// With integer ranks the centered sums `Σ(x−x̄)(y−ȳ)`, `Σ(x−x̄)²` are exact
/// rationals with denominator n²; this computes them in integer arithmetic
/// (scaled by n²) and performs one final division, so the result is the
/// correctly rounded double of the true correlation.
pub fn spearman_reference(r: &[usize], r_hat: &[usize]) -> Result<f64> {
    if r.len() != r_hat.len() {
        return Err(Error::Structure(format!(
            "rank lists differ in length: {} vs {}",
            r.len(),
            r_hat.len()
        )));
    }
    let n = r.len() as i64;
    if n < 2 {
        return Err(Error::Structure("rank correlation needs at least 2 entries".into()));
    }
    let sx: i64 = r.iter().map(|&v| v as i64).sum();
    let sy: i64 = r_hat.iter().map(|&v| v as i64).sum();
    // n²·Σ(x−x̄)(y−ȳ) = n·(n·Σxy − Sx·Sy), likewise for the variances.
    let sxy: i64 = r.iter().zip(r_hat).map(|(&x, &y)| (x * y) as i64).sum();
    let sxx: i64 = r.iter().map(|&x| (x * x) as i64).sum();
    let syy: i64 = r_hat.iter().map(|&y| (y * y) as i64).sum();
    let cov = n * sxy - sx * sy;
    let var_x = n * sxx - sx * sx;
    let var_y = n * syy - sy * sy;
    if var_x == 0 || var_y == 0 {
        return Err(Error::Structure("rank correlation undefined for constant ranks".into()));
    }
    // Distinct-rank inputs have equal variances; the square root is then
    // exact and the one division rounds once.
    if var_x != var_y {
        return Err(Error::Structure(
            "reference correlation expects permutation ranks (equal variances)".into(),
        ));
    }
    Ok(cov as f64 / var_x as f64)
}

/// Shapley values by full permutation enumeration: for each of the n!
/// orderings, each player's marginal contribution on joining; averaged.
/// Coalitions are bitmasks, so n ≤ 8 keeps this affordable.
pub fn shapley_permutation<F>(n: usize, mut v: F) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::Structure("shapley: zero players".into()));
    }
    if n > 8 {
        return Err(Error::Capability(format!(
            "permutation oracle enumerates {n}! orderings; limited to 8 players"
        )));
    }
    // Cache all 2^n coalition values once.
    let full = 1u32 << n;
    let mut cache = Vec::with_capacity(full as usize);
    for mask in 0..full {
        cache.push(v(mask)?);
    }

    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    // Heap's algorithm, iterative form: visits every permutation exactly once.
    let mut c = vec![0usize; n];
    let visit = |order: &[usize], phi: &mut [f64], count: &mut u64| {
        let mut mask = 0u32;
        for &p in order {
            let next = mask | (1 << p);
            phi[p] += cache[next as usize] - cache[mask as usize];
            mask = next;
        }
        *count += 1;
    };
    visit(&order, &mut phi, &mut count);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order, &mut phi, &mut count);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let n_fact: u64 = (1..=n as u64).product();
    debug_assert_eq!(count, n_fact);
    Ok(phi.into_iter().map(|p| p / n_fact as f64).collect())
}

/// Indices a magnitude-pruner must keep: sort positions by descending |v|
/// (ascending index on ties), take the first `m`. Returned ascending.
pub fn prune_reference_selected(values: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = idx.into_iter().take(m).collect();
    keep.sort_unstable();
    keep
}

/// Central-difference loss gradient at the given flat coordinates:
/// `(L(θ+h·e_j) − L(θ−h·e_j)) / 2h`.
pub fn finite_diff_grad(
    arch: &ModelArch,
    params: &LayeredParams,
    batch: &[Sample],
    flat_indices: &[usize],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite differences need h > 0, got {h}")));
    }
    let arch_desc = params.architecture();
    let base = params.flatten();
    let mut out = Vec::with_capacity(flat_indices.len());
    for &j in flat_indices {
        if j >= base.len() {
            return Err(Error::Structure(format!(
                "flat index {j} out of range for {} parameters",
                base.len()
            )));
        }
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let (lp, _) = model::forward_loss(arch, &LayeredParams::unflatten(&plus, &arch_desc)?, batch)?;
        let (lm, _) = model::forward_loss(arch, &LayeredParams::unflatten(&minus, &arch_desc)?, batch)?;
        out.push((lp - lm) / (2.0 * h));
    }
    Ok(out)
}

/// Sign-match score by scalar loop: `Σ_h sgn(θ[h])·sgn(u[h])`.
pub fn signed_match_reference(theta: &[f64], u: &[f64]) -> Result<f64> {
    if theta.len() != u.len() {
        return Err(Error::Structure("sign match: length mismatch".into()));
    }
    let mut total = 0.0;
    for (&a, &b) in theta.iter().zip(u) {
        let sa = if a > 0.0 {
            1.0
        } else if a < 0.0 {
            -1.0
        } else {
            0.0
        };
        let sb = if b > 0.0 {
            1.0
        } else if b < 0.0 {
            -1.0
        } else {
            0.0
        };
        total += sa * sb;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_reference_hand_case() {
        // Classic 5-rank example: Σd² = 2 → ρ = 1 − 12/120 = 0.9.
        let r = [1usize, 2, 3, 4, 5];
        let r_hat = [1usize, 3, 2, 4, 5];
        assert_eq!(spearman_reference(&r, &r_hat).unwrap(), 0.9);
    }

    #[test]
    fn spearman_reference_extremes() {
        for n in 2..=7usize {
            let fwd: Vec<usize> = (1..=n).collect();
            let rev: Vec<usize> = (1..=n).rev().collect();
            assert_eq!(spearman_reference(&fwd, &fwd).unwrap(), 1.0);
            assert_eq!(spearman_reference(&fwd, &rev).unwrap(), -1.0);
        }
    }

    #[test]
    fn spearman_reference_rejects_bad_shapes() {
        assert!(spearman_reference(&[1, 2], &[1]).is_err());
        assert!(spearman_reference(&[1], &[1]).is_err());
        assert!(spearman_reference(&[2, 2], &[1, 2]).is_err());
    }

    #[test]
    fn permutation_shapley_two_player_hand_case() {
        // Orderings (1,2) and (2,1): φ1 = (0.6 + 0.4)/2, φ2 = (0.2 + 0.4)/2.
        let table = [0.0, 0.6, 0.4, 0.8];
        let phi = shapley_permutation(2, |m| Ok(table[m as usize])).unwrap();
        assert!((phi[0] - 0.5).abs() < 1e-15);
        assert!((phi[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn permutation_shapley_efficiency() {
        let table = [0.1, 0.5, 0.3, 0.6, 0.2, 0.9, 0.4, 1.0];
        let phi = shapley_permutation(3, |m| Ok(table[m as usize])).unwrap();
        let total: f64 = phi.iter().sum();
        assert!((total - (table[7] - table[0])).abs() < 1e-12);
    }

    #[test]
    fn permutation_shapley_guard() {
        assert!(matches!(
            shapley_permutation(9, |_| Ok(0.0)),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn prune_selection_hand_case() {
        // |values| = [0.5, 0.3, 0.1, 0.05]; keep 2 → indices 0 and 1.
        assert_eq!(prune_reference_selected(&[0.5, -0.3, 0.1, 0.05], 2), vec![0, 1]);
        // Tie on magnitude: lower index wins.
        assert_eq!(prune_reference_selected(&[-0.3, 0.3, 0.1], 1), vec![0]);
        assert_eq!(prune_reference_selected(&[1.0, 2.0], 0), Vec::<usize>::new());
    }

    #[test]
    fn signed_match_hand_case() {
        // (+,+) + (−,−) + (+,−) = 1 + 1 − 1 = 1.
        let got = signed_match_reference(&[1.0, -2.0, 0.5], &[0.3, -0.1, -0.4]).unwrap();
        assert_eq!(got, 1.0);
        assert_eq!(signed_match_reference(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
    }
}
