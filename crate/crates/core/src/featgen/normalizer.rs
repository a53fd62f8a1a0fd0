//! Mode-specific normalization of continuous columns.
//!
//! A column is summarised by a 1-D Gaussian mixture; a value is encoded as
//! the index of its most responsible mode plus `(v - mu) / (4 sigma)` clipped
//! to `[-1, 1]`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const MAX_MODES: usize = 10;
pub const MIN_FIT_VALUES: usize = 10;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-6;
/// Values used for fitting; longer columns are subsampled.
const FIT_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousNormalizer {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Every training value was identical; decoding returns the value itself.
    #[serde(default)]
    pub constant: bool,
    pub min: f64,
    pub max: f64,
}

impl ContinuousNormalizer {
    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn std(&self, mode: usize) -> f64 {
        self.variances[mode].sqrt()
    }

    /// Most responsible mode for `v`.
    pub fn mode_of(&self, v: f64) -> usize {
        (0..self.modes())
            .map(|k| (k, self.weights[k].ln() + ln_normal(v, self.means[k], self.variances[k])))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |x| x.0)
    }

    /// `(mode, scalar)` encoding of `v`.
    ///
    /// The scalar is nudged by a few ulps when that makes [`denormalize`]
    /// return `v` bit for bit. An exact inverse does not exist for every
    /// float (there are more floats in a mode's range than in `[-1, 1]`), so
    /// the nudge only succeeds when `v` is not much closer to zero than to
    /// the mode mean.
    ///
    /// [`denormalize`]: ContinuousNormalizer::denormalize
    pub fn normalize(&self, v: f64) -> (usize, f64) {
        let k = self.mode_of(v);
        if self.constant {
            return (k, 0.0);
        }
        let scale = 4.0 * self.std(k);
        let s0 = ((v - self.means[k]) / scale).clamp(-1.0, 1.0);
        if s0.abs() == 1.0 || self.decode(k, s0) == v {
            return (k, s0);
        }
        let mut best = (s0, (self.decode(k, s0) - v).abs());
        let (mut up, mut down) = (s0, s0);
        for _ in 0..8 {
            up = up.next_up();
            down = down.next_down();
            for s in [up, down] {
                let err = (self.decode(k, s) - v).abs();
                if err == 0.0 {
                    return (k, s);
                }
                if err < best.1 {
                    best = (s, err);
                }
            }
        }
        (k, best.0)
    }

    fn decode(&self, mode: usize, scalar: f64) -> f64 {
        scalar.mul_add(4.0 * self.std(mode), self.means[mode])
    }

    pub fn denormalize(&self, mode: usize, scalar: f64) -> f64 {
        if self.constant {
            return self.means[mode];
        }
        self.decode(mode, scalar.clamp(-1.0, 1.0))
    }

    fn single(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let constant = values.iter().all(|&v| v == values[0]);
        let (min, max) = min_max(values);
        ContinuousNormalizer {
            weights: vec![1.0],
            means: vec![if constant { values[0] } else { mean }],
            variances: vec![var.max(variance_floor(var, mean))],
            constant,
            min,
            max,
        }
    }
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// `1e-6` of the sample variance, with an absolute floor for constant data.
fn variance_floor(sample_var: f64, mean: f64) -> f64 {
    (1e-6 * sample_var).max(f64::EPSILON * mean.abs().max(1.0).powi(2))
}

pub(crate) fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln() + std::f64::consts::LN_2 + std::f64::consts::PI.ln())
}

/// Fits a normalizer, choosing the mode count by BIC over `1..=10`.
///
/// Fewer than [`MIN_FIT_VALUES`] values get a single moment-matched mode.
pub fn fit_normalizer(values: &[f64], rng: &mut StreamRng) -> Result<ContinuousNormalizer> {
    if values.is_empty() {
        return Err(Error::Data("cannot fit a normalizer to an empty column".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {v} in continuous column")));
    }
    let first = values[0];
    if values.len() < MIN_FIT_VALUES || values.iter().all(|&v| v == first) {
        return Ok(ContinuousNormalizer::single(values));
    }
    let sample: Vec<f64> = if values.len() > FIT_SAMPLE {
        let mut idx = index::sample(rng, values.len(), FIT_SAMPLE).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| values[i]).collect()
    } else {
        values.to_vec()
    };
    let mut distinct = sample.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let var = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let floor = variance_floor(var, mean);

    let mut best: Option<(f64, Gmm1)> = None;
    for k in 1..=MAX_MODES.min(distinct.len()) {
        let gmm = em_1d(&sample, k, floor, rng);
        let params = (3 * k - 1) as f64;
        let bic = -2.0 * gmm.loglik + params * n.ln();
        if best.as_ref().is_none_or(|(b, _)| bic < *b) {
            best = Some((bic, gmm));
        }
    }
    let (_, mut gmm) = best.expect("at least one mode count");
    // canonical order by mean
    let mut order: Vec<usize> = (0..gmm.weights.len()).collect();
    order.sort_by(|&a, &b| gmm.means[a].total_cmp(&gmm.means[b]));
    let permute = |v: &Vec<f64>| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    gmm.weights = permute(&gmm.weights);
    gmm.means = permute(&gmm.means);
    gmm.variances = permute(&gmm.variances);
    let (min, max) = min_max(values);
    Ok(ContinuousNormalizer {
        weights: gmm.weights,
        means: gmm.means,
        variances: gmm.variances,
        constant: false,
        min,
        max,
    })
}

struct Gmm1 {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    loglik: f64,
}

/// k-means++ seeding followed by EM.
fn em_1d(x: &[f64], k: usize, floor: f64, rng: &mut StreamRng) -> Gmm1 {
    let n = x.len();
    let mut centers = vec![x[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = x.iter().map(|v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter().position(|&d| {
                u -= d;
                u <= 0.0
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = x[pick];
        centers.push(c);
        for (d, v) in d2.iter_mut().zip(x) {
            *d = d.min((v - c).powi(2));
        }
    }

    // hard assignment to nearest center to start
    let mut resp = vec![0.0; n * k];
    for (i, v) in x.iter().enumerate() {
        let j = (0..k).min_by(|&a, &b| (v - centers[a]).abs().total_cmp(&(v - centers[b]).abs())).unwrap();
        resp[i * k + j] = 1.0;
    }
    let mut g = Gmm1 { weights: vec![0.0; k], means: centers, variances: vec![floor; k], loglik: f64::NEG_INFINITY };
    let mut prev = f64::NEG_INFINITY;
    let mut lp = vec![0.0; k];
    for _ in 0..MAX_ITER {
        // M step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-10 {
                g.weights[j] = 1e-10;
                continue;
            }
            let mu = (0..n).map(|i| resp[i * k + j] * x[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + j] * (x[i] - mu).powi(2)).sum::<f64>() / nk;
            g.weights[j] = nk / n as f64;
            g.means[j] = mu;
            g.variances[j] = var.max(floor);
        }
        let wsum: f64 = g.weights.iter().sum();
        g.weights.iter_mut().for_each(|w| *w /= wsum);
        // E step
        let mut ll = 0.0;
        for (i, &v) in x.iter().enumerate() {
            for j in 0..k {
                lp[j] = g.weights[j].ln() + ln_normal(v, g.means[j], g.variances[j]);
            }
            let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = lp.iter().map(|l| (l - m).exp()).sum();
            ll += m + s.ln();
            for j in 0..k {
                resp[i * k + j] = (lp[j] - m).exp() / s;
            }
        }
        g.loglik = ll;
        if (ll - prev).abs() <= TOL * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constant_column_is_one_degenerate_mode() {
        let n = fit_normalizer(&[7.0; 50], &mut rng::stream(0, 0, 0)).unwrap();
        assert_eq!(n.modes(), 1);
        assert_eq!(n.means[0], 7.0);
        assert!(n.constant);
        assert!(n.variances[0] > 0.0);
        assert_eq!(n.normalize(7.0), (0, 0.0));
        assert_eq!(n.denormalize(0, 0.3), 7.0);
    }

    #[test]
    fn short_columns_get_one_mode() {
        let n = fit_normalizer(&[1.0, 2.0, 3.0], &mut rng::stream(0, 0, 0)).unwrap();
        assert_eq!(n.modes(), 1);
        assert_eq!(n.means[0], 2.0);
    }

    #[test]
    fn scalar_definition() {
        let n = ContinuousNormalizer {
            weights: vec![1.0],
            means: vec![2.0],
            variances: vec![0.25],
            constant: false,
            min: 0.0,
            max: 4.0,
        };
        assert_eq!(n.normalize(2.0), (0, 0.0));
        assert_eq!(n.normalize(4.0), (0, 1.0));
        assert_eq!(n.normalize(10.0), (0, 1.0));
        assert_eq!(n.denormalize(0, -1.0), 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(fit_normalizer(&[1.0, f64::NAN], &mut rng::stream(0, 0, 0)).is_err());
    }
}
