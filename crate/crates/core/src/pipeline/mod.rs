//! End-to-end commands: ingest, fit, generate, evaluate and the
//! Erdos-Renyi baseline, plus the scaling benchmark.

mod bundle;
mod config;
mod dataset;
pub mod toy;

pub use bundle::{BundleManifest, EdgeTypeInfo, FitReport, ModelBundle, BUNDLE_FORMAT_VERSION};
pub use config::{resolve_workers, PipelineConfig, WORKERS_ENV};
pub use dataset::{
    manifest_for, read_dataset, write_atomic, write_dataset, ColumnEntry, DatasetManifest, EdgeTypeEntry,
    PartiteEntry, Timings, FORMAT_VERSION, MANIFEST, TIMINGS,
};

use std::path::Path;

use crate::aligner::{self, AlignMode, AlignerModel, BoostConfig, MIN_TRAIN_EDGES};
use crate::error::{Error, Result};
use crate::featgen::{self, Backend, FeatureModel};
use crate::graph::{build_graph_from_table, structural_features, EdgeSet, Partite, PartiteGraph};
use crate::metrics::{self, GraphSummary, MetricsReport};
use crate::rng::{derive_seed, domain};
use crate::structgen::{self, NoiseConfig, SeedMatrix, SeedModel};

/// Seed for the sampled hop-plot in every summary, so that summaries taken
/// at fit time and at evaluation time use the same sources.
pub const SUMMARY_SEED: u64 = 0;

/// Reads the input CSV and builds the graph the config describes.
pub fn ingest(cfg: &PipelineConfig) -> Result<PartiteGraph> {
    cfg.validate()?;
    let table = cfg.read_input()?;
    build_graph_from_table(&table, &cfg.graph)
}

/// Fits every sub-model. Stage errors carry the stage name.
pub fn fit(cfg: &PipelineConfig) -> Result<(ModelBundle, Timings)> {
    let mut timings = Timings::default();
    let g = timings.time("ingest", || ingest(cfg)).map_err(|e| e.in_stage("ingest"))?;
    fit_graph(&g, cfg, timings)
}

/// [`fit`] on an already built graph.
pub fn fit_graph(g: &PartiteGraph, cfg: &PipelineConfig, mut timings: Timings) -> Result<(ModelBundle, Timings)> {
    let n_et = g.edge_types().len();
    let fitted = timings
        .time("structure", || {
            (0..n_et)
                .map(|i| structgen::fit_structure(g, i, cfg.noise, derive_seed(cfg.seed, domain::NOISE, i as u64)))
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("structure"))?;

    let tables = (0..n_et).map(|i| g.edge_centric_table(i)).collect::<Result<Vec<_>>>().map_err(|e| e.in_stage("features"))?;
    let features = timings
        .time("features", || {
            tables
                .iter()
                .enumerate()
                .map(|(i, t)| featgen::fit_feature_model(t, cfg.feature_backend, derive_seed(cfg.seed, domain::FIT, i as u64)))
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("features"))?;

    let mut diagnostics: Vec<Vec<String>> = vec![Vec::new(); n_et];
    let aligners = timings
        .time("aligner", || -> Result<Vec<Option<AlignerModel>>> {
            if cfg.aligner == AlignMode::Random {
                return Ok(vec![None; n_et]);
            }
            let sf = structural_features(g);
            let mut out = Vec::with_capacity(n_et);
            for (i, t) in tables.iter().enumerate() {
                let edges = g.edge_type(i).edges.len();
                if t.n_cols() == 0 {
                    diagnostics[i].push("no feature columns, nothing to align".into());
                    out.push(None);
                } else if edges < MIN_TRAIN_EDGES {
                    diagnostics[i].push(format!("only {edges} edges, features will be assigned at random"));
                    out.push(None);
                } else {
                    let inputs: Vec<Vec<f64>> = sf.edge_inputs(g, i).into_iter().map(|r| r.to_vec()).collect();
                    let seed = derive_seed(cfg.seed, domain::ALIGN, i as u64);
                    out.push(Some(aligner::fit_aligner(&inputs, t, BoostConfig::default(), seed)?));
                }
            }
            Ok(out)
        })
        .map_err(|e| e.in_stage("aligner"))?;

    let summary = timings
        .time("summary", || metrics::summarize(g, None, SUMMARY_SEED))
        .map_err(|e| e.in_stage("summary"))?;

    let fit = g
        .edge_types()
        .iter()
        .enumerate()
        .map(|(i, et)| {
            let (model, seed_fit) = &fitted[i];
            let mut diag = seed_fit.diagnostics.clone();
            diag.append(&mut diagnostics[i]);
            FitReport {
                edge_type: et.name.clone(),
                nodes_src: model.rows,
                nodes_dst: model.cols,
                edges: model.edges,
                density: model.density(),
                structure: seed_fit.clone(),
                quadrant_ratios: model.ratios,
                mixture_components: features[i].n_components(),
                mixture_bic: features[i].bic.clone(),
                aligner_trained: aligners[i].is_some(),
                diagnostics: diag,
            }
        })
        .collect();
    let manifest = BundleManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        generator: format!("graphsynth {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        partites: g.partites().to_vec(),
        edge_types: g
            .edge_types()
            .iter()
            .map(|et| EdgeTypeInfo { name: et.name.clone(), src: et.src, dst: et.dst })
            .collect(),
        fit,
    };
    let bundle = ModelBundle {
        manifest,
        structure: fitted.into_iter().map(|f| f.0).collect(),
        features,
        aligners,
        summary,
    };
    Ok((bundle, timings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub scale: f64,
    pub seed: u64,
    /// When false, feature rows are attached in sampling order.
    pub align: bool,
    /// Overrides the mode the bundle was fitted with.
    pub mode: Option<AlignMode>,
}

impl GenerateOptions {
    pub fn new(scale: f64, seed: u64) -> Self {
        GenerateOptions { scale, seed, align: true, mode: None }
    }
}

fn scaled_count(n: u64, s: f64) -> u64 {
    ((n as f64 * s.sqrt()).round() as u64).max(1)
}

/// Nodes of `partite` that no edge of `et` touches.
fn untouched(g: &PartiteGraph, et: usize) -> usize {
    let e = g.edge_type(et);
    let mut src = vec![false; g.partites()[e.src].node_count as usize];
    let mut dst = vec![false; g.partites()[e.dst].node_count as usize];
    for &(u, v) in &e.edges {
        src[u as usize] = true;
        dst[v as usize] = true;
    }
    if e.src == e.dst {
        src.iter().zip(&dst).filter(|(a, b)| !**a && !**b).count()
    } else {
        src.iter().filter(|x| !**x).count().max(dst.iter().filter(|x| !**x).count())
    }
}

fn has_node_columns(model: &FeatureModel) -> bool {
    model.schema.iter().any(|c| c.name.starts_with("src.") || c.name.starts_with("dst."))
}

/// Samples features for every edge type of `g` and attaches them.
fn attach_all(
    g: &mut PartiteGraph,
    features: &[FeatureModel],
    aligners: &[Option<&AlignerModel>],
    mode: Option<AlignMode>,
    seed: u64,
    timings: &mut Timings,
) -> Result<()> {
    let n_et = g.edge_types().len();
    let mut tables = Vec::with_capacity(n_et);
    timings
        .time("features", || -> Result<()> {
            for (i, fm) in features.iter().enumerate() {
                let e = g.edge_type(i).edges.len();
                let rows = featgen::sample_features(fm, e, derive_seed(seed, domain::FEATURES, 2 * i as u64))?;
                let extra = if has_node_columns(fm) { untouched(g, i) } else { 0 };
                let fill = featgen::sample_features(fm, extra, derive_seed(seed, domain::FEATURES, 2 * i as u64 + 1))?;
                tables.push((rows, fill));
            }
            Ok(())
        })
        .map_err(|e| e.in_stage("features"))?;

    timings
        .time("align", || -> Result<()> {
            let needs_structure = mode.is_some_and(|m| m != AlignMode::Random) && aligners.iter().any(Option::is_some);
            let sf = needs_structure.then(|| structural_features(g));
            let mut attached = Vec::with_capacity(n_et);
            for (i, (rows, fill)) in tables.into_iter().enumerate() {
                let assignment: Vec<usize> = match (mode, aligners[i], &sf) {
                    (None, _, _) => (0..rows.n_rows()).collect(),
                    (Some(m), Some(model), Some(sf)) if m != AlignMode::Random => {
                        let inputs: Vec<Vec<f64>> = sf.edge_inputs(g, i).into_iter().map(|r| r.to_vec()).collect();
                        let preds = aligner::predict_features(model, &inputs)?;
                        aligner::assign(&preds, &rows, Some(model), m, derive_seed(seed, domain::ALIGN, i as u64))?
                    }
                    (Some(_), _, _) => {
                        let preds = vec![Vec::new(); rows.n_rows()];
                        aligner::assign(&preds, &rows, None, AlignMode::Random, derive_seed(seed, domain::ALIGN, i as u64))?
                    }
                };
                attached.push((rows.take_rows(&assignment), fill));
            }
            for (i, (used, fill)) in attached.iter().enumerate() {
                let fill = (fill.n_rows() > 0).then_some(fill);
                aligner::attach_features(g, i, used, fill)?;
            }
            Ok(())
        })
        .map_err(|e| e.in_stage("align"))
}

/// Generates a synthetic graph from `bundle`, scaled by `opts.scale`.
pub fn generate(bundle: &ModelBundle, opts: &GenerateOptions) -> Result<(PartiteGraph, Timings)> {
    if !(opts.scale.is_finite() && opts.scale > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {}", opts.scale)));
    }
    let mut timings = Timings::default();
    let partites: Vec<Partite> = bundle
        .manifest
        .partites
        .iter()
        .map(|p| Partite { name: p.name.clone(), node_count: scaled_count(p.node_count, opts.scale) })
        .collect();
    let edge_types = timings
        .time("structure", || {
            bundle
                .manifest
                .edge_types
                .iter()
                .zip(&bundle.structure)
                .enumerate()
                .map(|(i, (info, model))| {
                    let scaled = structgen::scale_model(model, opts.scale)?;
                    debug_assert_eq!(scaled.rows, partites[info.src].node_count);
                    debug_assert_eq!(scaled.cols, partites[info.dst].node_count);
                    let edges = structgen::sample_edges(&scaled, scaled.edges, derive_seed(opts.seed, domain::EDGES, i as u64))?;
                    Ok(EdgeSet { name: info.name.clone(), src: info.src, dst: info.dst, edges, features: None })
                })
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("structure"))?;
    let mut g = PartiteGraph::structure(partites, edge_types).map_err(|e| e.in_stage("structure"))?;
    let mode = opts.align.then(|| opts.mode.unwrap_or(bundle.manifest.config.aligner));
    let aligners: Vec<Option<&AlignerModel>> = bundle.aligners.iter().map(Option::as_ref).collect();
    attach_all(&mut g, &bundle.features, &aligners, mode, opts.seed, &mut timings)?;
    Ok((g, timings))
}

/// Erdos-Renyi structure with the real node and edge counts, features from
/// the independent backend and random assignment.
pub fn baseline(cfg: &PipelineConfig) -> Result<(PartiteGraph, Timings)> {
    let mut timings = Timings::default();
    let real = timings.time("ingest", || ingest(cfg)).map_err(|e| e.in_stage("ingest"))?;
    baseline_graph(&real, cfg.seed, timings)
}

/// [`baseline`] on an already built graph.
pub fn baseline_graph(real: &PartiteGraph, seed: u64, mut timings: Timings) -> Result<(PartiteGraph, Timings)> {
    let edge_types = timings
        .time("structure", || {
            real.edge_types()
                .iter()
                .enumerate()
                .map(|(i, et)| {
                    let model = SeedModel::new(
                        SeedMatrix::uniform(),
                        real.partites()[et.src].node_count,
                        real.partites()[et.dst].node_count,
                        et.edges.len() as u64,
                        NoiseConfig::none(),
                        (1.0, 1.0),
                    )?;
                    let edges = structgen::sample_edges(&model, model.edges, derive_seed(seed, domain::EDGES, i as u64))?;
                    Ok(EdgeSet { name: et.name.clone(), src: et.src, dst: et.dst, edges, features: None })
                })
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("structure"))?;
    let features = timings
        .time("fit features", || {
            (0..real.edge_types().len())
                .map(|i| {
                    let t = real.edge_centric_table(i)?;
                    featgen::fit_feature_model(&t, Backend::Independent, derive_seed(seed, domain::FIT, i as u64))
                })
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| e.in_stage("features"))?;
    let mut g = PartiteGraph::structure(real.partites().to_vec(), edge_types)?;
    let aligners = vec![None; features.len()];
    attach_all(&mut g, &features, &aligners, Some(AlignMode::Random), seed, &mut timings)?;
    Ok((g, timings))
}

/// Real-side summary: taken from a bundle when `real` is one, otherwise
/// computed from the dataset.
pub fn real_summary(real: &Path) -> Result<GraphSummary> {
    if ModelBundle::is_bundle(real) {
        Ok(ModelBundle::load(real)?.summary)
    } else {
        let (_, g) = read_dataset(real)?;
        metrics::summarize(&g, None, SUMMARY_SEED)
    }
}

pub struct Evaluation {
    pub report: MetricsReport,
    pub real: GraphSummary,
    pub synthetic: GraphSummary,
}

/// Scores the synthetic dataset at `synthetic` against `real` (a dataset
/// or a bundle).
pub fn evaluate(real: &Path, synthetic: &Path) -> Result<Evaluation> {
    let r = real_summary(real)?;
    let (_, g) = read_dataset(synthetic)?;
    evaluate_against(&r, &g)
}

pub fn evaluate_against(real: &GraphSummary, synthetic: &PartiteGraph) -> Result<Evaluation> {
    let s = metrics::summarize(synthetic, Some(real), SUMMARY_SEED)?;
    let report = metrics::compare(real, &s)?;
    Ok(Evaluation { report, real: real.clone(), synthetic: s })
}

/// One row of the scaling benchmark.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingPoint {
    pub scale: f64,
    pub nodes: u64,
    pub edges: u64,
    pub generate_seconds: f64,
    pub write_seconds: f64,
    pub edges_per_second: f64,
}

/// Times generation (without alignment) and dataset writing for every
/// scale factor; each output is written under `scratch` and removed again.
pub fn bench_scaling(bundle: &ModelBundle, scales: &[f64], seed: u64, scratch: &Path) -> Result<Vec<ScalingPoint>> {
    let mut out = Vec::with_capacity(scales.len());
    for (k, &s) in scales.iter().enumerate() {
        let opts = GenerateOptions { scale: s, seed, align: false, mode: None };
        let start = std::time::Instant::now();
        let (g, timings) = generate(bundle, &opts)?;
        let generate_seconds = start.elapsed().as_secs_f64();
        let dir = scratch.join(format!("scale_{k}"));
        let start = std::time::Instant::now();
        write_dataset(&dir, &g, &manifest_for(&g, "bench-scaling", Some(seed), Some(s)), &timings)?;
        let write_seconds = start.elapsed().as_secs_f64();
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let edges = g.total_edges() as u64;
        out.push(ScalingPoint {
            scale: s,
            nodes: g.total_nodes(),
            edges,
            generate_seconds,
            write_seconds,
            edges_per_second: edges as f64 / (generate_seconds + write_seconds).max(1e-9),
        });
    }
    Ok(out)
}

pub fn write_scaling_csv(path: &Path, points: &[ScalingPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
