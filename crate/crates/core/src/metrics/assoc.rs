//! Pairwise column association: |Pearson r|, correlation ratio and Theil's U.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::table::{Column, FeatureTable};

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts.filter(|&c| c > 0.0).map(|c| -(c / n) * (c / n).ln()).sum()
}

fn histogram(x: &[u32]) -> FxHashMap<u32, f64> {
    let mut h = FxHashMap::default();
    for &v in x {
        *h.entry(v).or_insert(0.0) += 1.0;
    }
    h
}

/// `U(x|y) = (H(x) - H(x|y)) / H(x)` in nats; 0 when `x` is constant.
pub fn theils_u(x: &[u32], y: &[u32]) -> f64 {
    assert_eq!(x.len(), y.len(), "columns must have the same length");
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let hx_counts = histogram(x);
    let mut keys: Vec<u32> = hx_counts.keys().copied().collect();
    keys.sort_unstable();
    let hx = entropy(keys.iter().map(|k| hx_counts[k]), n);
    if hx == 0.0 {
        return 0.0;
    }
    let py = histogram(y);
    let mut joint: FxHashMap<(u32, u32), f64> = FxHashMap::default();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_insert(0.0) += 1.0;
    }
    let mut cells: Vec<((u32, u32), f64)> = joint.into_iter().collect();
    cells.sort_unstable_by_key(|c| c.0);
    // H(x|y) = -sum p(x,y) ln(p(x,y) / p(y))
    let hxy: f64 = cells.iter().map(|&((_, b), c)| -(c / n) * (c / py[&b]).ln()).sum();
    ((hx - hxy) / hx).clamp(0.0, 1.0)
}

/// `sqrt(between-group variance / total variance)`; 0 for zero variance.
pub fn correlation_ratio(cat: &[u32], cont: &[f64]) -> f64 {
    assert_eq!(cat.len(), cont.len(), "columns must have the same length");
    let n = cont.len() as f64;
    if cont.is_empty() {
        return 0.0;
    }
    let mean = cont.iter().sum::<f64>() / n;
    let total: f64 = cont.iter().map(|v| (v - mean).powi(2)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut groups: FxHashMap<u32, (f64, f64)> = FxHashMap::default();
    for (&c, &v) in cat.iter().zip(cont) {
        let g = groups.entry(c).or_insert((0.0, 0.0));
        g.0 += 1.0;
        g.1 += v;
    }
    let mut gs: Vec<(u32, (f64, f64))> = groups.into_iter().collect();
    gs.sort_unstable_by_key(|g| g.0);
    let between: f64 = gs.iter().map(|(_, (cnt, sum))| cnt * (sum / cnt - mean).powi(2)).sum();
    (between / total).sqrt().clamp(0.0, 1.0)
}

/// `|r|`; 0 when either column is constant.
pub fn abs_pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "columns must have the same length");
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).abs().clamp(0.0, 1.0)
}

/// Association between columns `i` and `j` of `t`. Categorical pairs give
/// `U(x_i | x_j)`, so the matrix is not symmetric.
pub fn association(t: &FeatureTable, i: usize, j: usize) -> f64 {
    if i == j {
        return 1.0;
    }
    match (t.column(i), t.column(j)) {
        (Column::Continuous(a), Column::Continuous(b)) => abs_pearson(a, b),
        (Column::Categorical(a), Column::Continuous(b)) | (Column::Continuous(b), Column::Categorical(a)) => {
            correlation_ratio(a, b)
        }
        (Column::Categorical(a), Column::Categorical(b)) => theils_u(a, b),
    }
}

/// Full association matrix, row-major.
pub fn association_matrix(t: &FeatureTable) -> Vec<Vec<f64>> {
    let n = t.n_cols();
    (0..n).into_par_iter().map(|i| (0..n).map(|j| association(t, i, j)).collect()).collect()
}

/// `1 - mean |real_ij - synth_ij|` over off-diagonal entries; `None` when
/// there are none.
pub fn matrix_agreement(real: &[Vec<f64>], synth: &[Vec<f64>]) -> Option<f64> {
    let n = real.len();
    if n < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += (real[i][j] - synth[i][j]).abs();
            }
        }
    }
    Some((1.0 - total / (n * (n - 1)) as f64).clamp(0.0, 1.0))
}
