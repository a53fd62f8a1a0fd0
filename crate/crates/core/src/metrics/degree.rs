//! Degree-distribution comparison on log-spaced degree points.

use serde::{Deserialize, Serialize};

use crate::graph::DegreeDistribution;

pub const DCC_POINTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DccMode {
    /// Unnormalized when node and edge totals agree, normalized otherwise.
    #[default]
    Auto,
    /// Degree divided by the maximum degree, count by the maximum count.
    Normalized,
    /// Raw degrees and counts.
    Raw,
}

/// `(x, y)` points of the non-zero counts at positive degree.
fn curve(dd: &DegreeDistribution, normalize: bool) -> Vec<(f64, f64)> {
    let pts: Vec<(f64, f64)> = (1..=dd.max_degree())
        .filter(|&k| dd.count(k) > 0)
        .map(|k| (k as f64, dd.count(k) as f64))
        .collect();
    if !normalize || pts.is_empty() {
        return pts;
    }
    let kmax = pts.last().expect("non-empty").0;
    let cmax = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    pts.into_iter().map(|(k, c)| (k / kmax, c / cmax)).collect()
}

/// Linear interpolation in `ln x`; zero outside the support.
fn interpolate(pts: &[(f64, f64)], x: f64) -> f64 {
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else { return 0.0 };
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let i = pts.partition_point(|p| p.0 < x);
    if pts[i].0 == x {
        return pts[i].1;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let t = (x.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
    a.1 + t * (b.1 - a.1)
}

/// Mean relative error `|c - c_hat| / c` of the synthetic curve against the
/// real one, at [`DCC_POINTS`] log-spaced degrees spanning the real
/// support.
pub fn dcc_with(real: &DegreeDistribution, synth: &DegreeDistribution, mode: DccMode) -> f64 {
    let normalize = match mode {
        DccMode::Normalized => true,
        DccMode::Raw => false,
        DccMode::Auto => !(real.node_count() == synth.node_count() && real.edge_count() == synth.edge_count()),
    };
    let rc = curve(real, normalize);
    let sc = curve(synth, normalize);
    if rc.is_empty() {
        return if sc.is_empty() { 0.0 } else { 1.0 };
    }
    let (lo, hi) = (rc[0].0.ln(), rc[rc.len() - 1].0.ln());
    let mut total = 0.0;
    let mut used = 0usize;
    for i in 0..DCC_POINTS {
        let x = if hi > lo { (lo + (hi - lo) * i as f64 / (DCC_POINTS - 1) as f64).exp() } else { rc[0].0 };
        // pin the end points so rounding in exp/ln cannot leave the support
        let x = if i == 0 { rc[0].0 } else if i == DCC_POINTS - 1 { rc[rc.len() - 1].0 } else { x };
        let c = interpolate(&rc, x);
        if c > 0.0 {
            total += (c - interpolate(&sc, x)).abs() / c;
            used += 1;
        }
    }
    if used == 0 {
        0.0
    } else {
        total / used as f64
    }
}

pub fn dcc(real: &DegreeDistribution, synth: &DegreeDistribution) -> f64 {
    dcc_with(real, synth, DccMode::Auto)
}

/// `max(0, 1 - dcc)`.
pub fn degree_dist_score(real: &DegreeDistribution, synth: &DegreeDistribution) -> f64 {
    (1.0 - dcc(real, synth)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Direction;

    fn dd(counts: &[u64]) -> DegreeDistribution {
        DegreeDistribution { direction: Direction::Out, counts: counts.to_vec() }
    }

    #[test]
    fn identical_is_zero() {
        let d = dd(&[3, 10, 5, 0, 2, 1]);
        assert_eq!(dcc(&d, &d), 0.0);
        assert_eq!(degree_dist_score(&d, &d), 1.0);
    }

    #[test]
    fn doubled_counts_give_unit_error_raw() {
        let a = dd(&[0, 10, 5, 2]);
        let b = dd(&[0, 20, 10, 4]);
        assert!((dcc_with(&a, &b, DccMode::Raw) - 1.0).abs() < 1e-12);
        assert!(dcc_with(&a, &b, DccMode::Normalized).abs() < 1e-12);
    }

    #[test]
    fn disjoint_support_clamps_to_zero_score() {
        let a = dd(&[0, 10, 5]);
        let b = dd(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 7]);
        assert_eq!(degree_dist_score(&a, &b), 0.0);
    }

    #[test]
    fn interpolation_is_linear_in_log_degree() {
        let pts = [(1.0, 10.0), (4.0, 2.0)];
        assert!((interpolate(&pts, 2.0) - 6.0).abs() < 1e-12);
        assert_eq!(interpolate(&pts, 5.0), 0.0);
    }
}
