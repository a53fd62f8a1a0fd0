use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Csr, PartiteGraph};
use crate::rng;

/// Reachable ordered pairs `d(h)` for `h = 1..=max_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopPlot {
    pub points: Vec<(u32, f64)>,
    pub effective_diameter: u32,
    /// Whether every node was used as a BFS source.
    pub exact: bool,
}

impl HopPlot {
    pub fn value(&self, h: u32) -> f64 {
        self.points.iter().find(|p| p.0 == h).map_or(0.0, |p| p.1)
    }
}

/// Hop-plot on the undirected projection of `g`, from
/// `min(num_sources, N)` uniformly sampled BFS sources.
pub fn hop_plot(g: &PartiteGraph, num_sources: usize, max_h: u32, seed: u64) -> HopPlot {
    hop_plot_on(&Csr::undirected(g), num_sources, max_h, seed)
}

pub fn hop_plot_on(adj: &Csr, num_sources: usize, max_h: u32, seed: u64) -> HopPlot {
    assert!(num_sources >= 1, "hop_plot needs at least one source");
    let n = adj.len();
    let max_h = max_h.max(1);
    if n == 0 {
        return HopPlot { points: (1..=max_h).map(|h| (h, 0.0)).collect(), effective_diameter: 0, exact: true };
    }
    let exact = num_sources >= n;
    let sources: Vec<usize> = if exact {
        (0..n).collect()
    } else {
        let mut r = rng::stream(seed, rng::domain::HOPS, 0);
        let mut s = index::sample(&mut r, n, num_sources).into_vec();
        s.sort_unstable();
        s
    };

    let per_level: Vec<u64> = sources
        .par_iter()
        .map_init(
            || (vec![u32::MAX; n], Vec::new(), Vec::new()),
            |(dist, frontier, touched), &src| {
                let mut counts = vec![0u64; max_h as usize + 1];
                dist[src] = 0;
                touched.push(src);
                frontier.clear();
                frontier.push(src as u32);
                let mut level = 0u32;
                while !frontier.is_empty() && level < max_h {
                    level += 1;
                    let mut next = Vec::new();
                    for &u in frontier.iter() {
                        for &w in adj.neighbors(u as usize) {
                            if dist[w as usize] == u32::MAX {
                                dist[w as usize] = level;
                                touched.push(w as usize);
                                next.push(w);
                            }
                        }
                    }
                    counts[level as usize] += next.len() as u64;
                    *frontier = next;
                }
                for &t in touched.iter() {
                    dist[t] = u32::MAX;
                }
                touched.clear();
                counts
            },
        )
        .reduce(
            || vec![0u64; max_h as usize + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let scale = n as f64 / sources.len() as f64;
    let mut cumulative = 0u64;
    let points: Vec<(u32, f64)> = (1..=max_h)
        .map(|h| {
            cumulative += per_level[h as usize];
            (h, cumulative as f64 * scale)
        })
        .collect();
    let total = points.last().map_or(0.0, |p| p.1);
    let effective_diameter = if total == 0.0 {
        0
    } else {
        points.iter().find(|p| p.1 >= 0.9 * total).map_or(max_h, |p| p.0)
    };
    HopPlot { points, effective_diameter, exact }
}
