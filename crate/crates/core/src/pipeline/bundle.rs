//! The releasable model bundle: a directory holding `manifest.json` and one
//! JSON file per sub-model, plus the real-graph summary used for evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::dataset::{read_json, write_atomic, write_json, Timings, MANIFEST, TIMINGS};
use crate::aligner::AlignerModel;
use crate::error::{Error, Result};
use crate::featgen::FeatureModel;
use crate::graph::Partite;
use crate::metrics::GraphSummary;
use crate::structgen::{SeedFit, SeedModel};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const STRUCTURE: &str = "structure.json";
pub const FEATURES: &str = "features.json";
pub const ALIGNER: &str = "aligner.json";
pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTypeInfo {
    pub name: String,
    pub src: usize,
    pub dst: usize,
}

/// Per edge type fit results, for humans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub edge_type: String,
    pub nodes_src: u64,
    pub nodes_dst: u64,
    pub edges: u64,
    pub density: f64,
    pub structure: SeedFit,
    pub quadrant_ratios: (f64, f64),
    pub mixture_components: usize,
    /// `(component count, BIC)` per candidate.
    pub mixture_bic: Vec<(usize, f64)>,
    pub aligner_trained: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub generator: String,
    pub config: PipelineConfig,
    pub partites: Vec<Partite>,
    pub edge_types: Vec<EdgeTypeInfo>,
    pub fit: Vec<FitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Named<T> {
    edge_type: String,
    model: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub manifest: BundleManifest,
    /// One entry per edge type, in manifest order.
    pub structure: Vec<SeedModel>,
    pub features: Vec<FeatureModel>,
    pub aligners: Vec<Option<AlignerModel>>,
    pub summary: GraphSummary,
}

fn named<T: Clone>(names: &[EdgeTypeInfo], items: &[T]) -> Vec<Named<T>> {
    names.iter().zip(items).map(|(n, m)| Named { edge_type: n.name.clone(), model: m.clone() }).collect()
}

fn unnamed<T>(names: &[EdgeTypeInfo], items: Vec<Named<T>>, file: &str) -> Result<Vec<T>> {
    if items.len() != names.len() || items.iter().zip(names).any(|(i, n)| i.edge_type != n.name) {
        return Err(Error::Data(format!("{file} does not list the manifest's edge types")));
    }
    Ok(items.into_iter().map(|i| i.model).collect())
}

impl ModelBundle {
    fn write_into(&self, dir: &Path, timings: Option<&Timings>) -> Result<()> {
        let names = &self.manifest.edge_types;
        write_json(&dir.join(STRUCTURE), &named(names, &self.structure))?;
        write_json(&dir.join(FEATURES), &named(names, &self.features))?;
        write_json(&dir.join(ALIGNER), &named(names, &self.aligners))?;
        write_json(&dir.join(SUMMARY), &self.summary)?;
        if let Some(t) = timings {
            write_json(&dir.join(TIMINGS), t)?;
        }
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    /// Saves the bundle. Nothing is left at `dir` if any write fails.
    pub fn save(&self, dir: &Path, timings: Option<&Timings>) -> Result<()> {
        write_atomic(dir, |tmp| self.write_into(tmp, timings))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join(MANIFEST))?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported bundle format version {}", manifest.format_version)));
        }
        let names = &manifest.edge_types;
        let structure = unnamed(names, read_json(&dir.join(STRUCTURE))?, STRUCTURE)?;
        let features = unnamed(names, read_json(&dir.join(FEATURES))?, FEATURES)?;
        let aligners = unnamed(names, read_json(&dir.join(ALIGNER))?, ALIGNER)?;
        let summary = read_json(&dir.join(SUMMARY))?;
        Ok(ModelBundle { manifest, structure, features, aligners, summary })
    }

    /// True when `dir` looks like a bundle rather than a dataset.
    pub fn is_bundle(dir: &Path) -> bool {
        dir.join(STRUCTURE).is_file()
    }
}
