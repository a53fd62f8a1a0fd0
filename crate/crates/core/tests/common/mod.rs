#![allow(dead_code)]

use graphsynth::graph::{Edge, EdgeSet, Partite, PartiteGraph};
use graphsynth::structgen::{sample_edges, NoiseConfig, SeedMatrix, SeedModel};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Row-major `2^n x 2^n` Kronecker power of a 2x2 seed, built by direct
/// products of the entries picked by each bit.
pub fn kron_power(seed: [f64; 4], n: u32) -> Vec<f64> {
    let side = 1usize << n;
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let mut p = 1.0;
            for level in 0..n {
                let rb = (r >> (n - 1 - level)) & 1;
                let cb = (c >> (n - 1 - level)) & 1;
                p *= seed[rb * 2 + cb];
            }
            out[r * side + c] = p;
        }
    }
    out
}

/// Upper-tail p-value of Pearson's chi-square statistic.
pub fn chi_square_p(observed: &[u64], expected_prob: &[f64]) -> f64 {
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_prob)
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn bipartite(rows: u64, cols: u64, edges: Vec<Edge>) -> PartiteGraph {
    PartiteGraph::structure(
        vec![Partite { name: "src".into(), node_count: rows }, Partite { name: "dst".into(), node_count: cols }],
        vec![EdgeSet { name: "e".into(), src: 0, dst: 1, edges, features: None }],
    )
    .unwrap()
}

pub fn noiseless(seed: SeedMatrix, rows: u64, cols: u64, edges: u64) -> SeedModel {
    SeedModel::new(seed, rows, cols, edges, NoiseConfig::none(), (1.0, 1.0)).unwrap()
}

pub fn kron_graph(seed: SeedMatrix, rows: u64, cols: u64, edges: u64, rng_seed: u64) -> PartiteGraph {
    let model = noiseless(seed, rows, cols, edges);
    bipartite(rows, cols, sample_edges(&model, edges, rng_seed).unwrap())
}
