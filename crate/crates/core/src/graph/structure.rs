use rayon::prelude::*;

use super::{Csr, PartiteGraph};

pub const STRUCT_WIDTH: usize = 4;
pub const STRUCT_FEATURE_NAMES: [&str; STRUCT_WIDTH] = ["degree", "pagerank", "clustering", "degree_centrality"];

const DAMPING: f64 = 0.85;
const PAGERANK_TOL: f64 = 1e-8;
const PAGERANK_MAX_ITERS: usize = 200;

/// Per-node structural descriptors, laid out over the global node index.
#[derive(Debug, Clone, PartialEq)]
pub struct StructFeatures {
    offsets: Vec<u64>,
    values: Vec<[f64; STRUCT_WIDTH]>,
}

impl StructFeatures {
    pub fn node(&self, partite: usize, id: u64) -> &[f64; STRUCT_WIDTH] {
        &self.values[(self.offsets[partite] + id) as usize]
    }

    pub fn all(&self) -> &[[f64; STRUCT_WIDTH]] {
        &self.values
    }

    pub fn pagerank(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v[1])
    }

    /// Input rows for the aligner: source features followed by destination
    /// features, one row per edge of `edge_type`.
    pub fn edge_inputs(&self, g: &PartiteGraph, edge_type: usize) -> Vec<[f64; 2 * STRUCT_WIDTH]> {
        let et = g.edge_type(edge_type);
        et.edges
            .iter()
            .map(|&(s, d)| {
                let mut row = [0.0; 2 * STRUCT_WIDTH];
                row[..STRUCT_WIDTH].copy_from_slice(self.node(et.src, s));
                row[STRUCT_WIDTH..].copy_from_slice(self.node(et.dst, d));
                row
            })
            .collect()
    }
}

/// Degree, pagerank, local clustering coefficient and degree centrality for
/// every node of `g`.
pub fn structural_features(g: &PartiteGraph) -> StructFeatures {
    let n = g.total_nodes() as usize;
    let degree = g.total_degrees();
    let rank = pagerank(g);
    let clustering = clustering_coefficients(&Csr::undirected(g));
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let values = (0..n)
        .map(|v| {
            let d = degree[v] as f64;
            let centrality = if n > 1 { d / denom } else { 0.0 };
            [d, rank[v], clustering[v], centrality]
        })
        .collect();
    StructFeatures { offsets: g.offsets(), values }
}

/// Power iteration with uniform teleport; dangling mass is spread uniformly.
pub(crate) fn pagerank(g: &PartiteGraph) -> Vec<f64> {
    let n = g.total_nodes() as usize;
    if n == 0 {
        return Vec::new();
    }
    let incoming = Csr::directed(g, true);
    let out_degree: Vec<usize> = {
        let mut d = vec![0usize; n];
        let offsets = g.offsets();
        for et in g.edge_types() {
            for &(s, _) in &et.edges {
                d[(offsets[et.src] + s) as usize] += 1;
            }
        }
        d
    };
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut share = vec![0.0; n];
    for _ in 0..PAGERANK_MAX_ITERS {
        let mut dangling = 0.0;
        for v in 0..n {
            if out_degree[v] == 0 {
                dangling += rank[v];
                share[v] = 0.0;
            } else {
                share[v] = rank[v] / out_degree[v] as f64;
            }
        }
        let base = (1.0 - DAMPING) / nf + DAMPING * dangling / nf;
        let next: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|v| base + DAMPING * incoming.neighbors(v).iter().map(|&u| share[u as usize]).sum::<f64>())
            .collect();
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if delta < PAGERANK_TOL {
            break;
        }
    }
    let total: f64 = rank.iter().sum();
    rank.iter_mut().for_each(|r| *r /= total);
    rank
}

/// Local clustering coefficient on a simple undirected adjacency.
pub(crate) fn clustering_coefficients(adj: &Csr) -> Vec<f64> {
    let n = adj.len();
    // orient each edge from lower to higher (degree, id) so every triangle is found once
    let rank = |v: usize| (adj.degree(v), v);
    let forward: Vec<Vec<u32>> = (0..n)
        .map(|v| adj.neighbors(v).iter().copied().filter(|&u| rank(u as usize) > rank(v)).collect())
        .collect();
    let mut triangles = vec![0u64; n];
    let mut mark = vec![false; n];
    for u in 0..n {
        for &w in &forward[u] {
            mark[w as usize] = true;
        }
        for &v in &forward[u] {
            for &w in &forward[v as usize] {
                if mark[w as usize] {
                    triangles[u] += 1;
                    triangles[v as usize] += 1;
                    triangles[w as usize] += 1;
                }
            }
        }
        for &w in &forward[u] {
            mark[w as usize] = false;
        }
    }
    (0..n)
        .map(|v| {
            let d = adj.degree(v) as f64;
            if d < 2.0 {
                0.0
            } else {
                2.0 * triangles[v] as f64 / (d * (d - 1.0))
            }
        })
        .collect()
}
