//! Fitting the seed matrix to observed degree distributions.
//!
//! Under the Kronecker cascade a row whose id has `i` one-bits among its `n`
//! row bits is hit by each edge with probability `p^(n-i) (1-p)^i`, so its
//! out-degree is `Binomial(E, p^(n-i) (1-p)^i)`. Summing over rows gives the
//! expected count of nodes with out-degree `k`; the in-degree side is the same
//! with `q` and the column bits. The squared error between observed and
//! expected counts therefore splits into one term in `p` and one in `q`,
//! which are minimized separately.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SeedMatrix, ShapePlan};
use crate::error::{Error, Result};
use crate::graph::{DegreeDistribution, Edge};

/// Search interval for the marginals. The loss is symmetric under
/// `p -> 1 - p` on power-of-two grids, so the heavy half is pinned to the low
/// ids.
pub const MARGINAL_LO: f64 = 0.5;
pub const MARGINAL_HI: f64 = 0.999;
const GRID_POINTS: usize = 48;
const GOLDEN_TOL: f64 = 1e-4;

/// `ln C(n, k)` for `k = 0..=kmax`, by the running product recurrence.
fn ln_binomial_row(n: u64, kmax: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax as usize + 1);
    let mut acc = 0.0f64;
    out.push(acc);
    for k in 1..=kmax.min(n) {
        acc += ((n - k + 1) as f64).ln() - (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `C(n, k)` for `k = 0..=n`, exact in integer arithmetic for `n <= 64`.
fn binomial_row(n: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut c: u128 = 1;
    out.push(1.0);
    for k in 1..=n as u128 {
        c = c * (n as u128 - k + 1) / k;
        out.push(c as f64);
    }
    out
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Number of ids in `0..limit` with exactly `i` one-bits, for `i = 0..=bits`.
/// `limit` must be at most `2^bits`.
pub fn popcount_profile(limit: u64, bits: u32) -> Vec<f64> {
    let mut out = vec![0.0; bits as usize + 1];
    if limit == 0 {
        return out;
    }
    if covers_grid(limit, bits) || bits == 64 {
        return binomial_row(bits);
    }
    // digit DP over the binary expansion of `limit`
    let mut ones_above = 0usize;
    for b in (0..bits).rev() {
        if (limit >> b) & 1 == 1 {
            // put 0 at bit b, the lower b bits are free
            for (j, c) in binomial_row(b).into_iter().enumerate() {
                out[ones_above + j] += c;
            }
            ones_above += 1;
        }
    }
    out
}

/// Log hit probability of a row with `i` one-bits, for `i = 0..=levels`.
fn class_ln_probs(p: f64, levels: u32) -> Vec<f64> {
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    (0..=levels)
        .map(|i| {
            let zeros = levels - i;
            (if zeros > 0 { zeros as f64 * ln_p } else { 0.0 }) + (if i > 0 { i as f64 * ln_q } else { 0.0 })
        })
        .collect()
}

fn covers_grid(limit: u64, levels: u32) -> bool {
    levels < 64 && limit >= 1u64 << levels
}

/// Closed-form expected counts of nodes with degree `k = 0..=kmax` when `E`
/// edges hit `limit` rows of a `2^levels` cascade with per-level marginal `p`.
/// Rows `>= limit` are excluded and the remaining probabilities renormalized,
/// matching the sampler's rejection of out-of-range ids. With
/// `limit = 2^levels` this is exactly [`expected_out_degree_counts`].
pub fn expected_degree_counts_limited(p: f64, levels: u32, limit: u64, edges: u64, kmax: usize) -> Vec<f64> {
    let profile = popcount_profile(limit, levels);
    let mut ln_r = class_ln_probs(p, levels);
    if !covers_grid(limit, levels) {
        let mass: Vec<f64> = profile
            .iter()
            .zip(&ln_r)
            .filter(|(&c, _)| c > 0.0)
            .map(|(&c, &lr)| c.ln() + lr)
            .collect();
        let ln_total = log_sum_exp(&mass);
        if ln_total.is_finite() {
            ln_r.iter_mut().for_each(|lr| *lr -= ln_total);
        }
    }
    binomial_mixture(&profile, &ln_r, edges, kmax)
}

fn binomial_mixture(weights: &[f64], ln_r: &[f64], edges: u64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    let top = (kmax as u64).min(edges) as usize;
    let ln_c = ln_binomial_row(edges, top as u64);
    let ln_w: Vec<f64> = weights.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let ln_1m: Vec<f64> = ln_r.iter().map(|&lr| (-lr.exp()).ln_1p()).collect();
    let mut terms = vec![0.0; ln_r.len()];
    for (k, slot) in out.iter_mut().enumerate().take(top + 1) {
        let rest = (edges - k as u64) as f64;
        for (i, t) in terms.iter_mut().enumerate() {
            let hit = if k == 0 { 0.0 } else { k as f64 * ln_r[i] };
            let miss = if rest == 0.0 { 0.0 } else { rest * ln_1m[i] };
            *t = ln_w[i] + ln_c[k] + hit + miss;
        }
        let v = log_sum_exp(&terms);
        *slot = if v.is_finite() { v.exp() } else { 0.0 };
    }
    out
}

/// Expected number of rows with out-degree `k` over a full `2^levels` row
/// cascade with marginal `p`, for `k = 0..=kmax`. Evaluated in log space.
pub fn expected_out_degree_counts(p: f64, levels: u32, edges: u64, kmax: usize) -> Vec<f64> {
    binomial_mixture(&popcount_profile(u64::MAX, levels), &class_ln_probs(p, levels), edges, kmax)
}

/// In-degree counterpart of [`expected_out_degree_counts`], driven by `q`
/// and the column exponent.
pub fn expected_in_degree_counts(q: f64, levels: u32, edges: u64, kmax: usize) -> Vec<f64> {
    expected_out_degree_counts(q, levels, edges, kmax)
}

/// Pooled quadrant frequencies over all square levels of all edges, with one
/// pseudo-count per quadrant. Returns `(a/b, a/c)`.
pub fn mle_quadrant_ratios(edges: &[Edge], shape: &ShapePlan) -> Result<(f64, f64)> {
    let counts = quadrant_counts(edges, shape)?;
    Ok((counts[0] / counts[1], counts[0] / counts[2]))
}

/// Smoothed `[a, b, c, d]` pseudo-counts behind [`mle_quadrant_ratios`].
pub fn quadrant_counts(edges: &[Edge], shape: &ShapePlan) -> Result<[f64; 4]> {
    if edges.is_empty() {
        return Err(Error::Fit("cannot estimate quadrant ratios from an empty edge list".into()));
    }
    let (n, m, s) = (shape.n, shape.m, shape.square_levels);
    if let Some(&(r, c)) = edges.iter().find(|&&(r, c)| (n < 64 && r >> n != 0) || (m < 64 && c >> m != 0)) {
        return Err(Error::Fit(format!("edge ({r}, {c}) does not fit a 2^{n} x 2^{m} grid")));
    }
    let raw = edges
        .par_iter()
        .fold(
            || [0u64; 4],
            |mut acc, &(r, c)| {
                for level in 0..s {
                    let rb = (r >> (n - 1 - level)) & 1;
                    let cb = (c >> (m - 1 - level)) & 1;
                    acc[(rb * 2 + cb) as usize] += 1;
                }
                acc
            },
        )
        .reduce(|| [0u64; 4], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]);
    Ok(raw.map(|x| x as f64 + 1.0))
}

/// Outcome of [`fit_seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFit {
    pub seed: SeedMatrix,
    pub p: f64,
    pub q: f64,
    pub loss_out: f64,
    pub loss_in: f64,
    pub diagnostics: Vec<String>,
}

/// Squared error between observed counts and the closed form for `p`.
pub fn degree_loss(observed: &DegreeDistribution, p: f64, levels: u32, limit: u64, edges: u64) -> f64 {
    let kmax = observed.max_degree();
    let expected = expected_degree_counts_limited(p, levels, limit, edges, kmax);
    (1..=kmax).map(|k| (observed.count(k) as f64 - expected[k]).powi(2)).sum()
}

/// Grid scan followed by golden-section refinement of a 1-D loss on
/// `[lo, hi]`. Returns `(argmin, min, flat)`.
fn minimize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64, bool) {
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if worst - best_val <= 1e-12 * (1.0 + best_val.abs()) {
        return (lo, best_val, true);
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > GOLDEN_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if v <= best_val {
        (x, v, false)
    } else {
        (grid[best], best_val, false)
    }
}

/// Fits `p` to the out-degree counts, `q` to the in-degree counts, then picks
/// `(a, b, c, d)` on the simplex `a + b = p`, `a + c = q` that best matches the
/// quadrant ratios in least squares.
pub fn fit_seed(
    dd_out: &DegreeDistribution,
    dd_in: &DegreeDistribution,
    shape: &ShapePlan,
    edges: u64,
    ratios: (f64, f64),
) -> Result<SeedFit> {
    if edges == 0 {
        return Err(Error::Fit("cannot fit a seed matrix to a graph without edges".into()));
    }
    let mut diagnostics = Vec::new();
    let rows = dd_out.node_count();
    let cols = dd_in.node_count();
    let mut fit_marginal = |dd: &DegreeDistribution, levels: u32, limit: u64, label: &str| -> (f64, f64) {
        let (x, loss, flat) = minimize_scalar(|x| degree_loss(dd, x, levels, limit, edges), MARGINAL_LO, MARGINAL_HI);
        if flat {
            diagnostics.push(format!("{label}: loss does not depend on the marginal ({levels} levels), using {x}"));
        } else if x - MARGINAL_LO < 2.0 * GOLDEN_TOL || MARGINAL_HI - x < 2.0 * GOLDEN_TOL {
            diagnostics.push(format!("{label}: optimum clamped at search boundary {x:.4}"));
        }
        (x, loss)
    };
    let (p, loss_out) = fit_marginal(dd_out, shape.n, rows, "p (out-degree)");
    let (q, loss_in) = fit_marginal(dd_in, shape.m, cols, "q (in-degree)");
    let seed = seed_from_marginals(p, q, ratios, &mut diagnostics);
    for d in &diagnostics {
        log::warn!("seed fit: {d}");
    }
    Ok(SeedFit { seed, p, q, loss_out, loss_in, diagnostics })
}

/// Solves `b = p - a`, `c = q - a`, `d = 1 - p - q + a` for the `a` that best
/// fits `a = r_ab * b` and `a = r_ac * c`, clamped to keep all entries
/// non-negative.
pub fn seed_from_marginals(p: f64, q: f64, ratios: (f64, f64), diagnostics: &mut Vec<String>) -> SeedMatrix {
    let (r1, r2) = ratios;
    let num = (1.0 + r1) * r1 * p + (1.0 + r2) * r2 * q;
    let den = (1.0 + r1).powi(2) + (1.0 + r2).powi(2);
    let a_star = num / den;
    let lo = (p + q - 1.0).max(0.0);
    let hi = p.min(q);
    let a = a_star.clamp(lo, hi);
    if a != a_star {
        diagnostics.push(format!(
            "ratio-implied a = {a_star:.4} infeasible for p = {p:.4}, q = {q:.4}; clamped to {a:.4}"
        ));
    }
    let b = (p - a).max(0.0);
    let c = (q - a).max(0.0);
    let d = (1.0 - a - b - c).max(0.0);
    SeedMatrix { a, b, c, d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Direction;

    /// Direct evaluation over every row id, no shortcuts.
    fn enumerate_rows(p: f64, levels: u32, limit: u64, edges: u64, kmax: usize) -> Vec<f64> {
        let probs: Vec<f64> = (0..limit)
            .map(|j| {
                let ones = j.count_ones() as i32;
                p.powi(levels as i32 - ones) * (1.0 - p).powi(ones)
            })
            .collect();
        let total: f64 = probs.iter().sum();
        let mut out = vec![0.0; kmax + 1];
        for r in probs {
            let r = r / total;
            for (k, o) in out.iter_mut().enumerate() {
                if k as u64 > edges {
                    continue;
                }
                let mut c = 1.0;
                for j in 0..k {
                    c *= (edges - j as u64) as f64 / (j + 1) as f64;
                }
                *o += c * r.powi(k as i32) * (1.0 - r).powi((edges - k as u64) as i32);
            }
        }
        out
    }

    #[test]
    fn no_edges_means_all_rows_have_degree_zero() {
        let c = expected_out_degree_counts(0.7, 5, 0, 4);
        assert!((c[0] - 32.0).abs() < 1e-9);
        assert!(c[1..].iter().all(|&x| x == 0.0));
        let c = expected_in_degree_counts(0.3, 2, 0, 2);
        assert!((c[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn matches_eight_row_enumeration() {
        let fast = expected_out_degree_counts(0.75, 3, 50, 50);
        let slow = enumerate_rows(0.75, 3, 8, 50, 50);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn in_degree_four_column_enumeration() {
        let fast = expected_in_degree_counts(0.9, 2, 20, 20);
        let slow = enumerate_rows(0.9, 2, 4, 20, 20);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn degree_above_edge_count_is_zero() {
        let c = expected_out_degree_counts(0.6, 2, 3, 6);
        assert!(c[4..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn limited_rows_match_enumeration() {
        for limit in [1u64, 5, 6, 7, 8, 13] {
            let levels = super::super::seed::ceil_log2(limit);
            let fast = expected_degree_counts_limited(0.7, levels, limit, 30, 30);
            let slow = enumerate_rows(0.7, levels, limit, 30, 30);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "limit {limit}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn popcount_profile_counts() {
        assert_eq!(popcount_profile(8, 3), vec![1.0, 3.0, 3.0, 1.0]);
        // 0..5 = {0,1,10,11,100}: popcounts 0,1,1,2,1
        assert_eq!(popcount_profile(5, 3), vec![1.0, 3.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetric_marginals_give_equal_counts() {
        let a = expected_out_degree_counts(0.5, 6, 500, 40);
        let b = expected_in_degree_counts(0.5, 6, 500, 40);
        assert_eq!(a, b);
    }

    #[test]
    fn quadrant_ratios_on_corner_mass() {
        let shape = super::super::plan_shape(4, 4).unwrap();
        let (ab, ac) = mle_quadrant_ratios(&[(0, 0); 50], &shape).unwrap();
        assert_eq!(ab, 101.0);
        assert_eq!(ac, 101.0);
        assert!(mle_quadrant_ratios(&[], &shape).is_err());
    }

    #[test]
    fn seed_from_marginals_hits_the_ratio() {
        let mut diag = Vec::new();
        let s = seed_from_marginals(0.76, 0.76, (3.0, 3.0), &mut diag);
        assert!((s.a - 0.57).abs() < 1e-12 && (s.b - 0.19).abs() < 1e-12 && (s.d - 0.05).abs() < 1e-12);
        assert!(diag.is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn infeasible_ratios_are_clamped_with_diagnostic() {
        let mut diag = Vec::new();
        let s = seed_from_marginals(0.76, 0.76, (1.0, 1.0), &mut diag);
        assert_eq!(diag.len(), 1);
        assert!((s.a - 0.52).abs() < 1e-12);
        s.validate().unwrap();
    }

    #[test]
    fn single_edge_graph_fits_without_crashing() {
        let out = DegreeDistribution { direction: Direction::Out, counts: vec![0, 1] };
        let inn = DegreeDistribution { direction: Direction::In, counts: vec![0, 1] };
        let shape = super::super::plan_shape(1, 1).unwrap();
        let fit = fit_seed(&out, &inn, &shape, 1, (1.0, 1.0)).unwrap();
        fit.seed.validate().unwrap();
        assert!(!fit.diagnostics.is_empty());
    }
}
