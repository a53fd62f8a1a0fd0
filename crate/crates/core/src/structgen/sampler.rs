//! Kronecker cascade edge sampler.
//!
//! Each edge descends `max(n, m)` levels; a square level picks one of four
//! quadrants from its (perturbed) seed and contributes one row bit and one
//! column bit, a padding level contributes a single bit from the row or
//! column marginal. Consecutive levels are fused into groups of at most 16
//! address bits whose joint outcome is drawn from one alias table.

use rand::RngCore;
use rayon::prelude::*;
use rustc_hash::FxHashSet;

use super::SeedModel;
use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::rng;

const GROUP_BITS: u32 = 16;
const CHUNK: usize = 1 << 16;
/// Total draws allowed per requested edge before giving up.
pub const RETRY_FACTOR: u64 = 100;

/// Distribution of a single cascade level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    /// Quadrant probabilities `[a, b, c, d]`.
    Square([f64; 4]),
    /// Row padding: probability of the upper half.
    Row(f64),
    /// Column padding: probability of the left half.
    Col(f64),
}

impl Level {
    fn outcomes(&self) -> Vec<(f64, u64, u64)> {
        match *self {
            Level::Square(t) => (0..4).map(|q| (t[q], (q >> 1) as u64, (q & 1) as u64)).collect(),
            Level::Row(p) => vec![(p, 0, 0), (1.0 - p, 1, 0)],
            Level::Col(q) => vec![(q, 0, 0), (1.0 - q, 0, 1)],
        }
    }

    fn bits(&self) -> (u32, u32) {
        match self {
            Level::Square(_) => (1, 1),
            Level::Row(_) => (1, 0),
            Level::Col(_) => (0, 1),
        }
    }
}

/// Vose alias table with 32-bit acceptance thresholds.
#[derive(Debug, Clone)]
struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        let total: f64 = probs.iter().sum();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p / total * n as f64).collect();
        let mut threshold = vec![1u64 << 32; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            threshold[s] = (scaled[s] * (1u64 << 32) as f64) as u64;
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        AliasTable { threshold, alias }
    }

    #[inline]
    fn sample(&self, u: u64) -> usize {
        let i = (((u >> 32) * self.threshold.len() as u64) >> 32) as usize;
        if (u & 0xffff_ffff) < self.threshold[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

#[derive(Debug, Clone)]
struct Group {
    row_bits: u32,
    col_bits: u32,
    table: AliasTable,
    parts: Vec<(u64, u64)>,
}

/// Draws cells of the `2^n x 2^m` grid from a level cascade.
#[derive(Debug, Clone)]
pub struct KroneckerSampler {
    groups: Vec<Group>,
}

impl KroneckerSampler {
    pub fn from_levels(levels: &[Level]) -> Self {
        let mut groups = Vec::new();
        let mut i = 0;
        while i < levels.len() {
            let mut outcomes = vec![(1.0f64, 0u64, 0u64)];
            let (mut rb, mut cb) = (0, 0);
            while i < levels.len() {
                let (r, c) = levels[i].bits();
                if rb + cb + r + c > GROUP_BITS && rb + cb > 0 {
                    break;
                }
                let level_out = levels[i].outcomes();
                outcomes = outcomes
                    .iter()
                    .flat_map(|&(p, row, col)| {
                        level_out.iter().map(move |&(lp, lr, lc)| (p * lp, (row << r) | lr, (col << c) | lc))
                    })
                    .collect();
                rb += r;
                cb += c;
                i += 1;
            }
            let probs: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
            groups.push(Group {
                row_bits: rb,
                col_bits: cb,
                table: AliasTable::new(&probs),
                parts: outcomes.iter().map(|o| (o.1, o.2)).collect(),
            });
        }
        KroneckerSampler { groups }
    }

    pub fn new(model: &SeedModel) -> Self {
        Self::from_levels(&model.levels())
    }

    /// One cell of the grid, no range check.
    #[inline]
    pub fn draw_cell<R: RngCore + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let (mut row, mut col) = (0u64, 0u64);
        for g in &self.groups {
            let (r, c) = g.parts[g.table.sample(rng.next_u64())];
            row = shl(row, g.row_bits) | r;
            col = shl(col, g.col_bits) | c;
        }
        (row, col)
    }
}

#[inline]
fn shl(x: u64, bits: u32) -> u64 {
    x.checked_shl(bits).unwrap_or(0)
}

/// Samples `edges` distinct in-range cells. Work is cut into fixed chunks,
/// chunk `k` drawing from stream `k` of `seed`, and merged in chunk order, so
/// the result depends only on `(model, edges, seed)` and not on the thread
/// count. Output is sorted by `(src, dst)`.
pub fn sample_edges(model: &SeedModel, edges: u64, seed: u64) -> Result<Vec<Edge>> {
    let capacity = model.rows as u128 * model.cols as u128;
    if edges as u128 > capacity {
        return Err(Error::Capacity(format!(
            "{edges} edges requested but a {} x {} graph holds at most {capacity}; use a smaller edge count",
            model.rows, model.cols
        )));
    }
    let sampler = KroneckerSampler::new(model);
    let (rows, cols, m) = (model.rows, model.cols, model.shape.m);
    let pack = |r: u64, c: u64| shl(r, m) | c;
    const REJECT: u64 = u64::MAX;

    let target = edges as usize;
    let cap = (RETRY_FACTOR * edges).max(RETRY_FACTOR);
    let mut seen: FxHashSet<u64> = FxHashSet::default();
    seen.reserve(target);
    let mut keys: Vec<u64> = Vec::with_capacity(target);
    let mut examined = 0u64;
    let mut next_chunk = 0u64;
    let mut acceptance = 1.0f64;

    while keys.len() < target {
        let need = target - keys.len();
        let wanted = (need as f64 / acceptance.max(1e-3) * 1.05).ceil() as usize;
        let n_chunks = wanted.div_ceil(CHUNK).max(1) as u64;
        let batches: Vec<Vec<u64>> = (next_chunk..next_chunk + n_chunks)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, rng::domain::EDGES, k);
                let take = CHUNK.min(wanted);
                (0..take)
                    .map(|_| {
                        let (row, col) = sampler.draw_cell(&mut r);
                        if row < rows && col < cols {
                            pack(row, col)
                        } else {
                            REJECT
                        }
                    })
                    .collect()
            })
            .collect();
        next_chunk += n_chunks;
        let (before_keys, before_examined) = (keys.len(), examined);
        'merge: for batch in &batches {
            for &key in batch {
                examined += 1;
                if examined > cap {
                    return Err(Error::Capacity(format!(
                        "only {} of {edges} distinct edges found after {cap} draws; the graph is too dense, use a smaller edge count",
                        keys.len()
                    )));
                }
                if key != REJECT && seen.insert(key) {
                    keys.push(key);
                    if keys.len() == target {
                        break 'merge;
                    }
                }
            }
        }
        let round_examined = (examined - before_examined).max(1);
        acceptance = (keys.len() - before_keys) as f64 / round_examined as f64;
    }
    drop(seen);
    keys.par_sort_unstable();
    let mask = if m >= 64 { u64::MAX } else { (1u64 << m) - 1 };
    Ok(keys.into_iter().map(|k| (k.checked_shr(m).unwrap_or(0), k & mask)).collect())
}
