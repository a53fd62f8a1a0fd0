//! Fidelity metrics of a synthetic graph against a real one.
//!
//! Everything the comparison needs from the real graph is captured in a
//! [`GraphSummary`], so a released model bundle can carry the real-side
//! statistics without the raw data.

mod assoc;
mod degree;
mod js;

pub use assoc::{abs_pearson, association, association_matrix, correlation_ratio, matrix_agreement, theils_u};
pub use degree::{dcc, dcc_with, degree_dist_score, DccMode, DCC_POINTS};
pub use js::{degree_bucket, joint_histogram, js_divergence, FeatureBins, DEGREE_BUCKETS, FEATURE_BINS};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{hop_plot, DegreeDistribution, Direction, HopPlot, PartiteGraph};
use crate::table::{ColumnKind, FeatureTable};

pub const HOP_SOURCES: usize = 1000;
pub const MAX_HOPS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub bins: FeatureBins,
    /// Joint histogram against the source out-degree.
    pub joint_src: Vec<f64>,
    /// Joint histogram against the destination in-degree.
    pub joint_dst: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTypeSummary {
    pub name: String,
    pub src_nodes: u64,
    pub dst_nodes: u64,
    pub edges: u64,
    pub out_degree: DegreeDistribution,
    pub in_degree: DegreeDistribution,
    pub columns: Vec<ColumnSummary>,
    pub association: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub edge_types: Vec<EdgeTypeSummary>,
    pub hop_plot: HopPlot,
}

/// Statistics of `g`. With a `reference`, feature bins are taken from it so
/// that the histograms of both graphs are comparable, and the edge types and
/// columns must match it.
pub fn summarize(g: &PartiteGraph, reference: Option<&GraphSummary>, seed: u64) -> Result<GraphSummary> {
    let mut edge_types = Vec::with_capacity(g.edge_types().len());
    for (i, et) in g.edge_types().iter().enumerate() {
        let table = g.edge_centric_table(i)?;
        let reference_et = match reference {
            Some(r) => Some(r.edge_types.iter().find(|x| x.name == et.name).ok_or_else(|| {
                Error::SchemaMismatch(vec![format!("edge type {}", et.name)])
            })?),
            None => None,
        };
        if let Some(r) = reference_et {
            check_columns(&table, r)?;
        }
        let out_deg = g.out_degrees(i);
        let in_deg = g.in_degrees(i);
        let src_deg: Vec<u64> = et.edges.iter().map(|e| out_deg[e.0 as usize]).collect();
        let dst_deg: Vec<u64> = et.edges.iter().map(|e| in_deg[e.1 as usize]).collect();
        let columns = (0..table.n_cols())
            .map(|c| {
                let bins = match reference_et {
                    Some(r) => r.columns[c].bins.clone(),
                    None => FeatureBins::fit(&table, c),
                };
                let assigned = bins.assign(&table, c)?;
                Ok(ColumnSummary {
                    name: table.schema()[c].name.clone(),
                    kind: table.schema()[c].kind,
                    joint_src: joint_histogram(&src_deg, &assigned, bins.len()),
                    joint_dst: joint_histogram(&dst_deg, &assigned, bins.len()),
                    bins,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        edge_types.push(EdgeTypeSummary {
            name: et.name.clone(),
            src_nodes: g.partites()[et.src].node_count,
            dst_nodes: g.partites()[et.dst].node_count,
            edges: et.edges.len() as u64,
            out_degree: DegreeDistribution::from_degrees(Direction::Out, &out_deg),
            in_degree: DegreeDistribution::from_degrees(Direction::In, &in_deg),
            columns,
            association: association_matrix(&table),
        });
    }
    if let Some(r) = reference {
        let missing: Vec<String> = r
            .edge_types
            .iter()
            .filter(|x| !edge_types.iter().any(|e| e.name == x.name))
            .map(|x| format!("edge type {}", x.name))
            .collect();
        if !missing.is_empty() {
            return Err(Error::SchemaMismatch(missing));
        }
    }
    Ok(GraphSummary { edge_types, hop_plot: hop_plot(g, HOP_SOURCES, MAX_HOPS, seed) })
}

fn check_columns(table: &FeatureTable, reference: &EdgeTypeSummary) -> Result<()> {
    let ours: Vec<(&str, ColumnKind)> = table.schema().iter().map(|s| (s.name.as_str(), s.kind)).collect();
    let theirs: Vec<(&str, ColumnKind)> = reference.columns.iter().map(|c| (c.name.as_str(), c.kind)).collect();
    if ours == theirs {
        return Ok(());
    }
    let mut diff: Vec<String> = ours
        .iter()
        .filter(|c| !theirs.contains(c))
        .chain(theirs.iter().filter(|c| !ours.contains(c)))
        .map(|c| c.0.to_string())
        .collect();
    if diff.is_empty() {
        diff.push(format!("column order of edge type {}", reference.name));
    }
    diff.dedup();
    Err(Error::SchemaMismatch(diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnJs {
    pub column: String,
    pub js: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTypeReport {
    pub name: String,
    pub dcc_out: f64,
    pub dcc_in: f64,
    pub degree_dist_score: f64,
    pub feature_corr_score: Option<f64>,
    pub degree_feature_js: Option<f64>,
    pub column_js: Vec<ColumnJs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopComparison {
    pub real: HopPlot,
    pub synthetic: HopPlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean of `max(0, 1 - dcc)` over edge types and both directions.
    pub degree_dist_score: f64,
    /// Mean raw DCC over edge types and both directions.
    pub dcc_raw: f64,
    pub feature_corr_score: f64,
    pub degree_feature_js: f64,
    pub edge_types: Vec<EdgeTypeReport>,
    pub hop_plot: HopComparison,
    pub diagnostics: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Compares two summaries; `synth` must have been computed with `real` as
/// its reference.
pub fn compare(real: &GraphSummary, synth: &GraphSummary) -> Result<MetricsReport> {
    let mut diagnostics = Vec::new();
    let mut reports = Vec::new();
    for r in &real.edge_types {
        let s = synth
            .edge_types
            .iter()
            .find(|x| x.name == r.name)
            .ok_or_else(|| Error::SchemaMismatch(vec![format!("edge type {}", r.name)]))?;
        if r.columns.len() != s.columns.len() {
            return Err(Error::SchemaMismatch(vec![format!("columns of edge type {}", r.name)]));
        }
        let dcc_out = dcc(&r.out_degree, &s.out_degree);
        let dcc_in = dcc(&r.in_degree, &s.in_degree);
        let feature_corr = matrix_agreement(&r.association, &s.association);
        if feature_corr.is_none() {
            diagnostics.push(format!(
                "edge type {}: fewer than two feature columns, feature correlation score is vacuous",
                r.name
            ));
        }
        let column_js: Vec<ColumnJs> = r
            .columns
            .iter()
            .zip(&s.columns)
            .map(|(a, b)| ColumnJs {
                column: a.name.clone(),
                js: 0.5 * (js_divergence(&a.joint_src, &b.joint_src) + js_divergence(&a.joint_dst, &b.joint_dst)),
            })
            .collect();
        reports.push(EdgeTypeReport {
            name: r.name.clone(),
            dcc_out,
            dcc_in,
            degree_dist_score: 0.5 * ((1.0 - dcc_out).max(0.0) + (1.0 - dcc_in).max(0.0)),
            feature_corr_score: feature_corr,
            degree_feature_js: mean(column_js.iter().map(|c| c.js)),
            column_js,
        });
    }
    let degree_dist_score = mean(reports.iter().map(|r| r.degree_dist_score)).unwrap_or(1.0);
    let dcc_raw = mean(reports.iter().flat_map(|r| [r.dcc_out, r.dcc_in])).unwrap_or(0.0);
    let feature_corr_score = mean(reports.iter().filter_map(|r| r.feature_corr_score)).unwrap_or(1.0);
    let degree_feature_js = mean(reports.iter().filter_map(|r| r.degree_feature_js)).unwrap_or_else(|| {
        diagnostics.push("no feature columns, degree-feature divergence is vacuous".into());
        0.0
    });
    Ok(MetricsReport {
        degree_dist_score,
        dcc_raw,
        feature_corr_score,
        degree_feature_js,
        edge_types: reports,
        hop_plot: HopComparison { real: real.hop_plot.clone(), synthetic: synth.hop_plot.clone() },
        diagnostics,
    })
}

/// Full evaluation of `synth` against `real`.
pub fn evaluate_graphs(real: &PartiteGraph, synth: &PartiteGraph, seed: u64) -> Result<MetricsReport> {
    let r = summarize(real, None, seed)?;
    let s = summarize(synth, Some(&r), seed)?;
    compare(&r, &s)
}

/// `1 - mean |A_real - A_synth|` over off-diagonal association entries.
/// A single-column table scores 1 (with a logged diagnostic).
pub fn feature_corr_score(real: &FeatureTable, synth: &FeatureTable) -> Result<f64> {
    let names = |t: &FeatureTable| t.schema().iter().map(|s| (s.name.clone(), s.kind)).collect::<Vec<_>>();
    if names(real) != names(synth) {
        let (a, b) = (names(real), names(synth));
        let diff = a.iter().filter(|c| !b.contains(c)).chain(b.iter().filter(|c| !a.contains(c))).map(|c| c.0.clone()).collect();
        return Err(Error::SchemaMismatch(diff));
    }
    Ok(matrix_agreement(&association_matrix(real), &association_matrix(synth)).unwrap_or_else(|| {
        log::warn!("fewer than two feature columns, feature correlation score is vacuous");
        1.0
    }))
}

/// Mean degree-feature Jensen-Shannon divergence over all edge types and
/// columns, with bins fixed from `real`.
pub fn degree_feature_js(real: &PartiteGraph, synth: &PartiteGraph) -> Result<f64> {
    Ok(evaluate_graphs(real, synth, 0)?.degree_feature_js)
}

pub fn hop_plot_compare(real: &PartiteGraph, synth: &PartiteGraph, sources: usize, seed: u64) -> HopComparison {
    HopComparison { real: hop_plot(real, sources, MAX_HOPS, seed), synthetic: hop_plot(synth, sources, MAX_HOPS, seed) }
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `report.json` plus one CSV per curve and matrix into `dir`.
pub fn write_report(dir: &Path, report: &MetricsReport, real: &GraphSummary, synth: &GraphSummary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(report)?;
    let path = dir.join("report.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let hop_rows = report.hop_plot.real.points.iter().map(|&(h, d)| {
        vec![h.to_string(), d.to_string(), report.hop_plot.synthetic.value(h).to_string()]
    });
    write_rows(&dir.join("hop_plot.csv"), &["hops".into(), "real".into(), "synthetic".into()], hop_rows)?;

    for r in &real.edge_types {
        let Some(s) = synth.edge_types.iter().find(|x| x.name == r.name) else { continue };
        for (dir_name, a, b) in [("out", &r.out_degree, &s.out_degree), ("in", &r.in_degree, &s.in_degree)] {
            let kmax = a.counts.len().max(b.counts.len());
            let rows = (0..kmax)
                .filter(|&k| a.count(k) > 0 || b.count(k) > 0)
                .map(|k| vec![k.to_string(), a.count(k).to_string(), b.count(k).to_string()]);
            write_rows(
                &dir.join(format!("degree_{}_{dir_name}.csv", r.name)),
                &["degree".into(), "real".into(), "synthetic".into()],
                rows,
            )?;
        }
        let header: Vec<String> = std::iter::once("column".to_string()).chain(r.columns.iter().map(|c| c.name.clone())).collect();
        for (label, m) in [("real", &r.association), ("synthetic", &s.association)] {
            let rows = m
                .iter()
                .zip(&r.columns)
                .map(|(row, c)| std::iter::once(c.name.clone()).chain(row.iter().map(|v| v.to_string())).collect());
            write_rows(&dir.join(format!("association_{}_{label}.csv", r.name)), &header, rows)?;
        }
    }
    Ok(())
}
