//! Structure generator: a generalized stochastic-Kronecker model for
//! rectangular (bipartite or homogeneous) adjacency matrices.
//!
//! Graphs with more than two partites are handled one edge type at a time;
//! each edge type gets its own [`SeedModel`] over its `(src, dst)` partites.

mod fit;
mod noise;
mod sampler;
mod seed;

pub use fit::{
    degree_loss, expected_degree_counts_limited, expected_in_degree_counts, expected_out_degree_counts, fit_seed,
    mle_quadrant_ratios, popcount_profile, quadrant_counts, seed_from_marginals, SeedFit, MARGINAL_HI, MARGINAL_LO,
};
pub use noise::{apply_noise, noise_bound, noise_matrix, sample_noise, NoiseConfig, DEFAULT_NOISE_STRENGTH};
pub use sampler::{sample_edges, KroneckerSampler, Level, RETRY_FACTOR};
pub use seed::{ceil_log2, plan_shape, SeedMatrix, ShapePlan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Direction, Edge, PartiteGraph};

/// Everything needed to sample edges for one edge type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedModel {
    pub seed: SeedMatrix,
    pub shape: ShapePlan,
    pub rows: u64,
    pub cols: u64,
    pub edges: u64,
    pub noise: NoiseConfig,
    /// Quadrant ratios `(a/b, a/c)` the seed was fitted with.
    pub ratios: (f64, f64),
}

impl SeedModel {
    /// Builds a model and resizes `noise` to the cascade depth.
    pub fn new(seed: SeedMatrix, rows: u64, cols: u64, edges: u64, noise: NoiseConfig, ratios: (f64, f64)) -> Result<Self> {
        seed.validate()?;
        let shape = plan_shape(rows, cols)?;
        check_capacity(rows, cols, edges)?;
        let noise = if noise.level_noise.is_empty() && noise.strength == 0.0 {
            noise
        } else {
            noise.resized(&seed, shape.levels())?
        };
        Ok(SeedModel { seed, shape, rows, cols, edges, noise, ratios })
    }

    /// The per-level distributions, most significant level first.
    pub fn levels(&self) -> Vec<Level> {
        let sq = self.shape.square_levels as usize;
        (0..self.shape.levels() as usize)
            .map(|i| {
                let s = self.noise.level_seed(&self.seed, i);
                if i < sq {
                    Level::Square(s.entries())
                } else if self.shape.row_pad_levels > 0 {
                    Level::Row(s.p())
                } else {
                    Level::Col(s.q())
                }
            })
            .collect()
    }

    pub fn density(&self) -> f64 {
        self.edges as f64 / (self.rows as f64 * self.cols as f64)
    }
}

fn check_capacity(rows: u64, cols: u64, edges: u64) -> Result<()> {
    if edges as u128 > rows as u128 * cols as u128 {
        return Err(Error::Capacity(format!(
            "{edges} edges do not fit a {rows} x {cols} adjacency; reduce the edge count or the scale"
        )));
    }
    Ok(())
}

/// Scales node counts by `sqrt(s)` and edges by `s`, which keeps the density
/// profile of the fitted graph. Shared noise levels keep their draws.
pub fn scale_model(model: &SeedModel, s: f64) -> Result<SeedModel> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Config(format!("scale factor must be positive, got {s}")));
    }
    let rows = ((model.rows as f64 * s.sqrt()).round() as u64).max(1);
    let cols = ((model.cols as f64 * s.sqrt()).round() as u64).max(1);
    let edges = (model.edges as f64 * s).round() as u64;
    SeedModel::new(model.seed, rows, cols, edges, model.noise.clone(), model.ratios)
}

/// Ids ordered by descending degree, ties by id; `out[old] = new`.
fn degree_rank(degrees: &[u64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..degrees.len()).collect();
    order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
    let mut rank = vec![0u64; degrees.len()];
    for (r, &id) in order.iter().enumerate() {
        rank[id] = r as u64;
    }
    rank
}

/// Fits a [`SeedModel`] to edge type `edge_type` of `g`.
///
/// Quadrant ratios are estimated after relabelling sources by descending
/// out-degree and destinations by descending in-degree, which places the
/// heavy rows and columns in the `a` corner of the grid.
pub fn fit_structure(g: &PartiteGraph, edge_type: usize, noise_strength: f64, seed: u64) -> Result<(SeedModel, SeedFit)> {
    let et = g.edge_type(edge_type);
    let rows = g.partites()[et.src].node_count;
    let cols = g.partites()[et.dst].node_count;
    let shape = plan_shape(rows, cols)?;
    if et.edges.is_empty() {
        return Err(Error::Fit(format!("edge type '{}' has no edges to fit", et.name)));
    }
    let out_rank = degree_rank(&g.out_degrees(edge_type));
    let in_rank = degree_rank(&g.in_degrees(edge_type));
    let relabelled: Vec<Edge> = et.edges.iter().map(|&(u, v)| (out_rank[u as usize], in_rank[v as usize])).collect();
    let ratios = mle_quadrant_ratios(&relabelled, &shape)?;
    let dd_out = g.degree_distribution(edge_type, Direction::Out);
    let dd_in = g.degree_distribution(edge_type, Direction::In);
    let fit = fit_seed(&dd_out, &dd_in, &shape, et.edges.len() as u64, ratios)?;
    let noise = NoiseConfig::draw(&fit.seed, noise_strength, shape.levels(), seed)?;
    let model = SeedModel::new(fit.seed, rows, cols, et.edges.len() as u64, noise, ratios)?;
    Ok((model, fit))
}
