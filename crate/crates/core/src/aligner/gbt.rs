//! Histogram gradient-boosted regression trees with squared-error loss.
//!
//! Split finding and leaf weights follow the usual second-order recipe with
//! an L1 term `alpha` that soft-thresholds gradient sums and an L2 term
//! `lambda` added to the hessian.

use serde::{Deserialize, Serialize};

const MAX_BINS: usize = 64;
const LEAF: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig { trees: 100, learning_rate: 0.1, max_depth: 5, alpha: 10.0, lambda: 1.0 }
    }
}

/// A regression tree stored as parallel arrays. Node 0 is the root; a node
/// is a leaf when `left == 0`. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<u32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        while self.left[node] != LEAF {
            node = if x[self.feature[node] as usize] <= self.threshold[node] {
                self.left[node]
            } else {
                self.right[node]
            } as usize;
        }
        self.value[node]
    }

    fn push(&mut self, value: f64) -> usize {
        self.feature.push(0);
        self.threshold.push(0.0);
        self.left.push(LEAF);
        self.right.push(LEAF);
        self.value.push(value);
        self.value.len() - 1
    }

    pub fn nodes(&self) -> usize {
        self.value.len()
    }
}

/// `base + scale * sum(learning_rate * tree(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base: f64,
    pub scale: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn constant(base: f64) -> Self {
        Ensemble { base, scale: 1.0, learning_rate: 0.0, trees: Vec::new() }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base + self.scale * self.learning_rate * s
    }
}

/// Quantile-binned copy of the training inputs.
pub struct Binned {
    /// Feature-major bin codes.
    codes: Vec<Vec<u8>>,
    /// Upper edge of every bin except the last, per feature.
    cuts: Vec<Vec<f64>>,
    n: usize,
}

impl Binned {
    pub fn new(x: &[Vec<f64>], width: usize) -> Self {
        let n = x.len();
        let mut codes = Vec::with_capacity(width);
        let mut cuts = Vec::with_capacity(width);
        for f in 0..width {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let c: Vec<f64> = if vals.len() <= MAX_BINS {
                vals[..vals.len().saturating_sub(1)].to_vec()
            } else {
                let mut c: Vec<f64> = (1..MAX_BINS).map(|b| vals[b * vals.len() / MAX_BINS - 1]).collect();
                c.dedup();
                c
            };
            codes.push(x.iter().map(|r| c.partition_point(|&cut| cut < r[f]) as u8).collect());
            cuts.push(c);
        }
        Binned { codes, cuts, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn soft(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

fn score(g: f64, h: f64, cfg: &BoostConfig) -> f64 {
    soft(g, cfg.alpha).powi(2) / (h + cfg.lambda)
}

fn leaf_weight(g: f64, h: f64, cfg: &BoostConfig) -> f64 {
    -soft(g, cfg.alpha) / (h + cfg.lambda)
}

fn grow(data: &Binned, grad: &[f64], cfg: &BoostConfig) -> Tree {
    let mut tree = Tree { feature: vec![], threshold: vec![], left: vec![], right: vec![], value: vec![] };
    let all: Vec<u32> = (0..data.n as u32).collect();
    let g0: f64 = grad.iter().sum();
    let root = tree.push(leaf_weight(g0, data.n as f64, cfg));
    let mut stack = vec![(root, all, 0usize)];
    let width = data.codes.len();
    let mut hist_g = vec![0.0; MAX_BINS];
    let mut hist_h = vec![0.0; MAX_BINS];
    while let Some((node, rows, depth)) = stack.pop() {
        if depth >= cfg.max_depth || rows.len() < 2 {
            continue;
        }
        let g_tot: f64 = rows.iter().map(|&r| grad[r as usize]).sum();
        let h_tot = rows.len() as f64;
        let parent = score(g_tot, h_tot, cfg);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..width {
            let nb = data.cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            hist_g[..nb].iter_mut().for_each(|x| *x = 0.0);
            hist_h[..nb].iter_mut().for_each(|x| *x = 0.0);
            let codes = &data.codes[f];
            for &r in &rows {
                let b = codes[r as usize] as usize;
                hist_g[b] += grad[r as usize];
                hist_h[b] += 1.0;
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..nb - 1 {
                gl += hist_g[b];
                hl += hist_h[b];
                let (gr, hr) = (g_tot - gl, h_tot - hl);
                if hl < 1.0 || hr < 1.0 {
                    continue;
                }
                let gain = score(gl, hl, cfg) + score(gr, hr, cfg) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, f, b)) = best else { continue };
        let codes = &data.codes[f];
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| codes[r as usize] as usize <= b);
        let wl = leaf_weight(lrows.iter().map(|&r| grad[r as usize]).sum(), lrows.len() as f64, cfg);
        let wr = leaf_weight(rrows.iter().map(|&r| grad[r as usize]).sum(), rrows.len() as f64, cfg);
        let l = tree.push(wl);
        let r = tree.push(wr);
        tree.feature[node] = f as u32;
        tree.threshold[node] = data.cuts[f][b];
        tree.left[node] = l as u32;
        tree.right[node] = r as u32;
        stack.push((r, rrows, depth + 1));
        stack.push((l, lrows, depth + 1));
    }
    tree
}

/// Fits `y` from the binned inputs. Targets are standardized internally, so
/// the L1 penalty acts on a unit scale whatever the column units.
pub fn fit_ensemble(data: &Binned, x: &[Vec<f64>], y: &[f64], cfg: &BoostConfig) -> Ensemble {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ensemble::constant(mean);
    }
    let target: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
    let mut pred = vec![0.0; y.len()];
    let mut trees = Vec::with_capacity(cfg.trees);
    let mut grad = vec![0.0; y.len()];
    for _ in 0..cfg.trees {
        for i in 0..y.len() {
            grad[i] = pred[i] - target[i];
        }
        let tree = grow(data, &grad, cfg);
        if tree.nodes() == 1 && tree.value[0] == 0.0 {
            break;
        }
        for (p, row) in pred.iter_mut().zip(x) {
            *p += cfg.learning_rate * tree.predict(row);
        }
        trees.push(tree);
    }
    Ensemble { base: mean, scale: sd, learning_rate: cfg.learning_rate, trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_has_no_trees() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let b = Binned::new(&x, 1);
        let e = fit_ensemble(&b, &x, &[3.5; 20], &BoostConfig::default());
        assert!(e.trees.is_empty());
        assert_eq!(e.predict(&[100.0]), 3.5);
    }

    #[test]
    fn step_function_is_learned() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| if i < 100 { -1.0 } else { 1.0 }).collect();
        let b = Binned::new(&x, 2);
        let e = fit_ensemble(&b, &x, &y, &BoostConfig::default());
        // the L1 term stops shrinking residuals once |sum| < alpha per leaf
        assert!((e.predict(&[10.0, 3.0]) + 1.0).abs() < 0.15);
        assert!((e.predict(&[150.0, 3.0]) - 1.0).abs() < 0.15);
        assert!(e.trees.iter().all(|t| t.nodes() <= 63));
    }

    #[test]
    fn l1_penalty_zeroes_small_leaves() {
        let cfg = BoostConfig { alpha: 1e9, ..BoostConfig::default() };
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let e = fit_ensemble(&Binned::new(&x, 1), &x, &y, &cfg);
        assert!(e.trees.is_empty());
    }

    #[test]
    fn bins_respect_thresholds() {
        let x: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i as f64).sqrt()]).collect();
        let b = Binned::new(&x, 1);
        assert!(b.cuts[0].len() < MAX_BINS);
        for (r, &c) in x.iter().zip(&b.codes[0]) {
            let c = c as usize;
            if c > 0 {
                assert!(r[0] > b.cuts[0][c - 1]);
            }
            if c < b.cuts[0].len() {
                assert!(r[0] <= b.cuts[0][c]);
            }
        }
    }
}
