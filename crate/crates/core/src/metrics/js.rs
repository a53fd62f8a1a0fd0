//! Joint degree/feature histograms and their Jensen-Shannon divergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Column, FeatureTable};

/// Bucket 0 holds degree 0, bucket `b >= 1` holds `[2^(b-1), 2^b)`; degrees
/// of `2^20` and above share the last bucket.
pub const DEGREE_BUCKETS: usize = 22;
pub const FEATURE_BINS: usize = 16;

pub fn degree_bucket(d: u64) -> usize {
    if d == 0 {
        0
    } else {
        (64 - d.leading_zeros() as usize).min(DEGREE_BUCKETS - 1)
    }
}

/// Feature binning fixed from the real data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBins {
    /// Quantile cut points; a value goes to the first bin whose cut is `>=` it.
    Continuous { cuts: Vec<f64> },
    /// Most frequent labels; everything else shares one extra bin.
    Categorical { labels: Vec<String> },
}

impl FeatureBins {
    pub fn fit(table: &FeatureTable, col: usize) -> Self {
        match table.column(col) {
            Column::Continuous(v) => {
                let mut s = v.clone();
                s.sort_by(f64::total_cmp);
                let mut cuts: Vec<f64> =
                    if s.is_empty() { Vec::new() } else { (1..FEATURE_BINS).map(|i| s[i * s.len() / FEATURE_BINS]).collect() };
                cuts.dedup();
                FeatureBins::Continuous { cuts }
            }
            Column::Categorical(v) => {
                let vocab = &table.schema()[col].vocabulary;
                let mut counts = vec![0usize; vocab.len()];
                for &c in v {
                    counts[c as usize] += 1;
                }
                let mut order: Vec<usize> = (0..vocab.len()).filter(|&i| counts[i] > 0).collect();
                order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(vocab[a].cmp(&vocab[b])));
                order.truncate(FEATURE_BINS - 1);
                FeatureBins::Categorical { labels: order.into_iter().map(|i| vocab[i].clone()).collect() }
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureBins::Continuous { cuts } => cuts.len() + 1,
            FeatureBins::Categorical { labels } => labels.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bin index of every row of column `col`.
    pub fn assign(&self, table: &FeatureTable, col: usize) -> Result<Vec<usize>> {
        let name = &table.schema()[col].name;
        match (self, table.column(col)) {
            (FeatureBins::Continuous { cuts }, Column::Continuous(v)) => {
                Ok(v.iter().map(|x| cuts.partition_point(|c| c < x)).collect())
            }
            (FeatureBins::Categorical { labels }, Column::Categorical(v)) => {
                let vocab = &table.schema()[col].vocabulary;
                let map: Vec<usize> =
                    vocab.iter().map(|w| labels.iter().position(|l| l == w).unwrap_or(labels.len())).collect();
                Ok(v.iter().map(|&c| map[c as usize]).collect())
            }
            _ => Err(Error::SchemaMismatch(vec![name.clone()])),
        }
    }
}

/// Normalized joint histogram over (degree bucket, feature bin), row-major
/// by degree bucket. All zeros when there are no rows.
pub fn joint_histogram(degrees: &[u64], bins: &[usize], n_bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; DEGREE_BUCKETS * n_bins];
    for (&d, &b) in degrees.iter().zip(bins) {
        h[degree_bucket(d) * n_bins + b] += 1.0;
    }
    let total = degrees.len() as f64;
    if total > 0.0 {
        h.iter_mut().for_each(|x| *x /= total);
    }
    h
}

/// Jensen-Shannon divergence in bits. Each bin term is symmetric in its
/// arguments, so `js(p, q) == js(q, p)` holds exactly.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms must share their binning");
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if sp == 0.0 || sq == 0.0 {
        return if sp == sq { 0.0 } else { 1.0 };
    }
    let term = |a: f64, m: f64| if a > 0.0 { a * (a / m).log2() } else { 0.0 };
    let js: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let m = 0.5 * (a + b);
            0.5 * (term(a, m) + term(b, m))
        })
        .sum();
    js.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets() {
        assert_eq!(degree_bucket(0), 0);
        assert_eq!(degree_bucket(1), 1);
        assert_eq!(degree_bucket(3), 2);
        assert_eq!(degree_bucket(4), 3);
        assert_eq!(degree_bucket(1 << 20), DEGREE_BUCKETS - 1);
        assert_eq!(degree_bucket(u64::MAX), DEGREE_BUCKETS - 1);
    }

    #[test]
    fn js_extremes() {
        let p = [0.5, 0.5, 0.0, 0.0];
        let q = [0.0, 0.0, 0.25, 0.75];
        assert_eq!(js_divergence(&p, &p), 0.0);
        assert!((js_divergence(&p, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_bins_are_balanced() {
        let t = FeatureTable::new(
            vec![crate::table::ColumnSpec::continuous("x")],
            vec![Column::Continuous((0..1600).map(f64::from).collect())],
        )
        .unwrap();
        let b = FeatureBins::fit(&t, 0);
        assert_eq!(b.len(), FEATURE_BINS);
        let bins = b.assign(&t, 0).unwrap();
        for k in 0..FEATURE_BINS {
            let n = bins.iter().filter(|&&x| x == k).count();
            assert!((99..=101).contains(&n), "bin {k}: {n}");
        }
    }
}
