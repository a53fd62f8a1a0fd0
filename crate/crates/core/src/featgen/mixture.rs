//! Latent-class mixture over encoded feature rows.
//!
//! Every column contributes one discrete factor (its category, or the mode
//! index of a continuous column) and every continuous column additionally
//! contributes its within-mode scalar. Within a component the factors are
//! independent categoricals and the scalars independent Gaussians; the
//! dependence between columns is carried by the component label.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normalizer::ln_normal;
use crate::rng::StreamRng;

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-6;
const CHUNK: usize = 2048;

/// Column-major encoded rows.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    pub n: usize,
    pub scalars: Vec<Vec<f64>>,
    pub factors: Vec<Vec<u32>>,
    pub sizes: Vec<usize>,
}

impl Encoded {
    pub fn subsample(&self, max_rows: usize, rng: &mut StreamRng) -> Encoded {
        if self.n <= max_rows {
            return self.clone();
        }
        let mut idx = index::sample(rng, self.n, max_rows).into_vec();
        idx.sort_unstable();
        Encoded {
            n: max_rows,
            scalars: self.scalars.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            factors: self.factors.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            sizes: self.sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    /// Per continuous column, mean of the within-mode scalar.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Per column, probabilities of each category (or mode).
    pub tables: Vec<Vec<f64>>,
}

pub(crate) struct MixtureFit {
    pub components: Vec<Component>,
    pub loglik: f64,
    pub bic: f64,
}

pub(crate) fn parameter_count(k: usize, data: &Encoded) -> usize {
    let per = 2 * data.scalars.len() + data.sizes.iter().map(|s| s - 1).sum::<usize>();
    k - 1 + k * per
}

struct Stats {
    loglik: f64,
    nk: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    counts: Vec<f64>,
}

impl Stats {
    fn zero(k: usize, c: usize, t: usize) -> Self {
        Stats { loglik: 0.0, nk: vec![0.0; k], s1: vec![0.0; k * c], s2: vec![0.0; k * c], counts: vec![0.0; k * t] }
    }

    fn add(&mut self, o: &Stats) {
        self.loglik += o.loglik;
        for (a, b) in [(&mut self.nk, &o.nk), (&mut self.s1, &o.s1), (&mut self.s2, &o.s2), (&mut self.counts, &o.counts)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

struct Layout {
    k: usize,
    c: usize,
    t: usize,
    offsets: Vec<usize>,
}

impl Layout {
    fn new(k: usize, data: &Encoded) -> Self {
        let mut offsets = Vec::with_capacity(data.sizes.len());
        let mut t = 0;
        for &s in &data.sizes {
            offsets.push(t);
            t += s;
        }
        Layout { k, c: data.scalars.len(), t, offsets }
    }

    fn accumulate(&self, st: &mut Stats, data: &Encoded, i: usize, resp: &[f64]) {
        for (j, &r) in resp.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            st.nk[j] += r;
            for (ci, col) in data.scalars.iter().enumerate() {
                let x = col[i];
                st.s1[j * self.c + ci] += r * x;
                st.s2[j * self.c + ci] += r * x * x;
            }
            for (f, col) in data.factors.iter().enumerate() {
                st.counts[j * self.t + self.offsets[f] + col[i] as usize] += r;
            }
        }
    }
}

/// Log-space parameters used by the E step.
struct LnParams {
    ln_w: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    ln_table: Vec<f64>,
}

impl LnParams {
    fn from_stats(st: &Stats, lay: &Layout, data: &Encoded, floors: &[f64]) -> Self {
        let (k, c, t) = (lay.k, lay.c, lay.t);
        let n: f64 = st.nk.iter().sum();
        let mut p = LnParams { ln_w: vec![0.0; k], mean: vec![0.0; k * c], var: vec![0.0; k * c], ln_table: vec![0.0; k * t] };
        for j in 0..k {
            let nk = st.nk[j];
            p.ln_w[j] = (nk.max(1e-10) / n).ln();
            for ci in 0..c {
                let (m, v) = if nk > 1e-10 {
                    let m = st.s1[j * c + ci] / nk;
                    (m, st.s2[j * c + ci] / nk - m * m)
                } else {
                    (0.0, 1.0)
                };
                p.mean[j * c + ci] = m;
                p.var[j * c + ci] = v.max(floors[ci]);
            }
            for (f, &size) in data.sizes.iter().enumerate() {
                let base = j * t + lay.offsets[f];
                let denom = nk + size as f64;
                for v in 0..size {
                    p.ln_table[base + v] = ((st.counts[base + v] + 1.0) / denom).ln();
                }
            }
        }
        p
    }

    fn row(&self, lay: &Layout, data: &Encoded, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut l = self.ln_w[j];
            for (ci, col) in data.scalars.iter().enumerate() {
                l += ln_normal(col[i], self.mean[j * lay.c + ci], self.var[j * lay.c + ci]);
            }
            for (f, col) in data.factors.iter().enumerate() {
                l += self.ln_table[j * lay.t + lay.offsets[f] + col[i] as usize];
            }
            *o = l;
        }
    }

    fn into_components(self, lay: &Layout, data: &Encoded) -> Vec<Component> {
        (0..lay.k)
            .map(|j| Component {
                weight: self.ln_w[j].exp(),
                mean: self.mean[j * lay.c..(j + 1) * lay.c].to_vec(),
                var: self.var[j * lay.c..(j + 1) * lay.c].to_vec(),
                tables: data
                    .sizes
                    .iter()
                    .enumerate()
                    .map(|(f, &s)| {
                        let base = j * lay.t + lay.offsets[f];
                        self.ln_table[base..base + s].iter().map(|l| l.exp()).collect()
                    })
                    .collect(),
            })
            .collect()
    }
}

fn e_step(p: &LnParams, lay: &Layout, data: &Encoded) -> Stats {
    let chunks: Vec<Stats> = (0..data.n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut st = Stats::zero(lay.k, lay.c, lay.t);
            let mut lp = vec![0.0; lay.k];
            for i in ch * CHUNK..((ch + 1) * CHUNK).min(data.n) {
                p.row(lay, data, i, &mut lp);
                let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = lp.iter().map(|l| (l - m).exp()).sum();
                st.loglik += m + s.ln();
                lp.iter_mut().for_each(|l| *l = (*l - m).exp() / s);
                lay.accumulate(&mut st, data, i, &lp);
            }
            st
        })
        .collect();
    let mut total = Stats::zero(lay.k, lay.c, lay.t);
    for c in &chunks {
        total.add(c);
    }
    total
}

/// Mixed distance used for k-means++ seeding: squared scalar distance plus
/// one per mismatching factor.
fn distance(data: &Encoded, a: usize, b: usize) -> f64 {
    let s: f64 = data.scalars.iter().map(|c| (c[a] - c[b]).powi(2)).sum();
    s + data.factors.iter().filter(|c| c[a] != c[b]).count() as f64
}

pub(crate) fn fit_mixture(data: &Encoded, k: usize, rng: &mut StreamRng) -> MixtureFit {
    let n = data.n;
    let lay = Layout::new(k, data);
    let floors: Vec<f64> = data
        .scalars
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            (1e-6 * v).max(1e-10)
        })
        .collect();

    // k-means++ seeds, then a hard assignment gives the first parameters
    let mut seeds = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| distance(data, i, seeds[0])).collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            d2.iter()
                .position(|&d| {
                    u -= d;
                    u <= 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        seeds.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(distance(data, i, pick));
        }
    }
    let mut st = Stats::zero(k, lay.c, lay.t);
    let mut resp = vec![0.0; k];
    for i in 0..n {
        let j = (0..k).min_by(|&a, &b| distance(data, i, seeds[a]).total_cmp(&distance(data, i, seeds[b]))).unwrap();
        resp.iter_mut().for_each(|r| *r = 0.0);
        resp[j] = 1.0;
        lay.accumulate(&mut st, data, i, &resp);
    }

    let mut params = LnParams::from_stats(&st, &lay, data, &floors);
    let mut prev = f64::NEG_INFINITY;
    let mut loglik = f64::NEG_INFINITY;
    for _ in 0..MAX_ITER {
        let st = e_step(&params, &lay, data);
        loglik = st.loglik;
        params = LnParams::from_stats(&st, &lay, data, &floors);
        if (loglik - prev).abs() <= TOL * loglik.abs().max(1.0) {
            break;
        }
        prev = loglik;
    }
    let bic = -2.0 * loglik + parameter_count(k, data) as f64 * (n as f64).ln();
    MixtureFit { components: params.into_components(&lay, data), loglik, bic }
}
