//! Attributed partite graphs: construction from tabular rows, degree
//! distributions, per-node structural features and hop-plots.

mod build;
mod csr;
mod hops;
mod structure;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::FeatureTable;

pub use build::{build_graph_from_table, ConstructionSpec, EdgeCondition, EdgeSpec, PartiteSpec};
pub use csr::Csr;
pub use hops::{hop_plot, hop_plot_on, HopPlot};
pub use structure::{structural_features, StructFeatures, STRUCT_FEATURE_NAMES, STRUCT_WIDTH};

/// Directed edge between a node of the source partite and a node of the
/// destination partite, both as dense per-partite indices.
pub type Edge = (u64, u64);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partite {
    pub name: String,
    pub node_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub name: String,
    /// Index into the graph's partites.
    pub src: usize,
    pub dst: usize,
    pub edges: Vec<Edge>,
    pub features: Option<FeatureTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

/// `counts[k]` is the number of nodes with degree `k`, zero-degree nodes included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    pub direction: Direction,
    pub counts: Vec<u64>,
}

impl DegreeDistribution {
    pub fn from_degrees(direction: Direction, degrees: &[u64]) -> Self {
        let max = degrees.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![0u64; max + 1];
        for &d in degrees {
            counts[d as usize] += 1;
        }
        DegreeDistribution { direction, counts }
    }

    pub fn node_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of `k * c_k`, i.e. the number of edge endpoints counted.
    pub fn edge_count(&self) -> u64 {
        self.counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0)
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.node_count() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartiteGraph {
    partites: Vec<Partite>,
    edge_types: Vec<EdgeSet>,
    node_features: Vec<Option<FeatureTable>>,
}

impl PartiteGraph {
    pub fn new(partites: Vec<Partite>, edge_types: Vec<EdgeSet>, node_features: Vec<Option<FeatureTable>>) -> Result<Self> {
        if node_features.len() != partites.len() {
            return Err(Error::Data("one node-feature slot per partite is required".into()));
        }
        for et in &edge_types {
            let (Some(src), Some(dst)) = (partites.get(et.src), partites.get(et.dst)) else {
                return Err(Error::Data(format!("edge type `{}` references a missing partite", et.name)));
            };
            if let Some(&(s, d)) = et.edges.iter().find(|&&(s, d)| s >= src.node_count || d >= dst.node_count) {
                return Err(Error::Data(format!("edge ({s}, {d}) of `{}` is out of range", et.name)));
            }
            if let Some(f) = &et.features {
                if f.n_rows() != et.edges.len() {
                    return Err(Error::Data(format!(
                        "edge type `{}` has {} edges but {} feature rows",
                        et.name,
                        et.edges.len(),
                        f.n_rows()
                    )));
                }
            }
        }
        for (p, nf) in partites.iter().zip(&node_features) {
            if let Some(f) = nf {
                if f.n_rows() as u64 != p.node_count {
                    return Err(Error::Data(format!(
                        "partite `{}` has {} nodes but {} feature rows",
                        p.name,
                        p.node_count,
                        f.n_rows()
                    )));
                }
            }
        }
        Ok(PartiteGraph {
            partites,
            edge_types,
            node_features,
        })
    }

    /// Structure-only graph with the given partites and edges.
    pub fn structure(partites: Vec<Partite>, edge_types: Vec<EdgeSet>) -> Result<Self> {
        let n = partites.len();
        Self::new(partites, edge_types, vec![None; n])
    }

    pub fn partites(&self) -> &[Partite] {
        &self.partites
    }

    pub fn edge_types(&self) -> &[EdgeSet] {
        &self.edge_types
    }

    pub fn edge_type(&self, i: usize) -> &EdgeSet {
        &self.edge_types[i]
    }

    pub fn node_features(&self, partite: usize) -> Option<&FeatureTable> {
        self.node_features[partite].as_ref()
    }

    pub fn partite_index(&self, name: &str) -> Option<usize> {
        self.partites.iter().position(|p| p.name == name)
    }

    pub fn total_nodes(&self) -> u64 {
        self.partites.iter().map(|p| p.node_count).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.edge_types.iter().map(|e| e.edges.len()).sum()
    }

    /// Global index offset of each partite when all partites are laid out
    /// back to back.
    pub fn offsets(&self) -> Vec<u64> {
        let mut acc = 0;
        self.partites
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.node_count;
                o
            })
            .collect()
    }

    pub fn out_degrees(&self, edge_type: usize) -> Vec<u64> {
        let et = &self.edge_types[edge_type];
        let mut deg = vec![0u64; self.partites[et.src].node_count as usize];
        for &(s, _) in &et.edges {
            deg[s as usize] += 1;
        }
        deg
    }

    pub fn in_degrees(&self, edge_type: usize) -> Vec<u64> {
        let et = &self.edge_types[edge_type];
        let mut deg = vec![0u64; self.partites[et.dst].node_count as usize];
        for &(_, d) in &et.edges {
            deg[d as usize] += 1;
        }
        deg
    }

    /// Out-degree distribution over the source partite, or in-degree over the
    /// destination partite, of one edge type. Panics if `edge_type` is out of range.
    pub fn degree_distribution(&self, edge_type: usize, direction: Direction) -> DegreeDistribution {
        let degrees = match direction {
            Direction::Out => self.out_degrees(edge_type),
            Direction::In => self.in_degrees(edge_type),
        };
        DegreeDistribution::from_degrees(direction, &degrees)
    }

    /// Total (in + out) degree of every node over all edge types, indexed
    /// globally (see [`PartiteGraph::offsets`]).
    pub fn total_degrees(&self) -> Vec<u64> {
        let offsets = self.offsets();
        let mut deg = vec![0u64; self.total_nodes() as usize];
        for et in &self.edge_types {
            let (os, od) = (offsets[et.src], offsets[et.dst]);
            for &(s, d) in &et.edges {
                deg[(os + s) as usize] += 1;
                deg[(od + d) as usize] += 1;
            }
        }
        deg
    }

    /// The row-per-edge table the feature generator learns from: edge
    /// features followed by source and destination node features.
    pub fn edge_centric_table(&self, edge_type: usize) -> Result<FeatureTable> {
        let et = &self.edge_types[edge_type];
        let n = et.edges.len();
        let edge_part = et.features.clone().unwrap_or_else(|| FeatureTable::zero_width(n));
        let gather = |partite: usize, pick: fn(&Edge) -> u64, prefix: &str| -> FeatureTable {
            match &self.node_features[partite] {
                Some(f) => {
                    let rows: Vec<usize> = et.edges.iter().map(|e| pick(e) as usize).collect();
                    f.take_rows(&rows).with_prefix(prefix)
                }
                None => FeatureTable::zero_width(n),
            }
        };
        let src = gather(et.src, |e| e.0, "src.");
        let dst = gather(et.dst, |e| e.1, "dst.");
        FeatureTable::hstack(&[&edge_part, &src, &dst])
    }

    pub fn set_node_features(&mut self, partite: usize, features: Option<FeatureTable>) -> Result<()> {
        if let Some(f) = &features {
            if f.n_rows() as u64 != self.partites[partite].node_count {
                return Err(Error::Data("node feature row count mismatch".into()));
            }
        }
        self.node_features[partite] = features;
        Ok(())
    }

    pub fn set_edge_features(&mut self, edge_type: usize, features: Option<FeatureTable>) -> Result<()> {
        if let Some(f) = &features {
            if f.n_rows() != self.edge_types[edge_type].edges.len() {
                return Err(Error::Data("edge feature row count mismatch".into()));
            }
        }
        self.edge_types[edge_type].features = features;
        Ok(())
    }
}
