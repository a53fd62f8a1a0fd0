//! On-disk graph datasets: `manifest.json`, one `nodes_<partite>.csv` per
//! partite and one `edges_<edge type>.csv` per edge type.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSet, Partite, PartiteGraph};
use crate::table::{ColumnKind, FeatureTable};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartiteEntry {
    pub name: String,
    pub nodes: u64,
    pub file: String,
    pub columns: Vec<ColumnEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTypeEntry {
    pub name: String,
    pub src: String,
    pub dst: String,
    pub edges: u64,
    pub density: f64,
    pub file: String,
    pub columns: Vec<ColumnEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Command that produced the dataset.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub partites: Vec<PartiteEntry>,
    pub edge_types: Vec<EdgeTypeEntry>,
}

/// Wall-clock seconds per stage, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|s| s.1).sum()
    }
}

fn columns_of(t: Option<&FeatureTable>) -> Vec<ColumnEntry> {
    t.map(|t| t.schema().iter().map(|s| ColumnEntry { name: s.name.clone(), kind: s.kind }).collect())
        .unwrap_or_default()
}

/// File names must not escape the dataset directory.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn manifest_for(g: &PartiteGraph, source: &str, seed: Option<u64>, scale: Option<f64>) -> DatasetManifest {
    let partites = g
        .partites()
        .iter()
        .enumerate()
        .map(|(i, p)| PartiteEntry {
            name: p.name.clone(),
            nodes: p.node_count,
            file: format!("nodes_{}.csv", file_stem(&p.name)),
            columns: columns_of(g.node_features(i)),
        })
        .collect();
    let edge_types = g
        .edge_types()
        .iter()
        .map(|et| {
            let cells = g.partites()[et.src].node_count as f64 * g.partites()[et.dst].node_count as f64;
            EdgeTypeEntry {
                name: et.name.clone(),
                src: g.partites()[et.src].name.clone(),
                dst: g.partites()[et.dst].name.clone(),
                edges: et.edges.len() as u64,
                density: if cells > 0.0 { et.edges.len() as f64 / cells } else { 0.0 },
                file: format!("edges_{}.csv", file_stem(&et.name)),
                columns: columns_of(et.features.as_ref()),
            }
        })
        .collect();
    DatasetManifest { format_version: FORMAT_VERSION, source: source.to_string(), seed, scale, partites, edge_types }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Writes `prefix` integer columns followed by `features`, one row per index.
fn write_rows(
    path: &Path,
    id_names: &[&str],
    ids: impl Fn(usize) -> (u64, Option<u64>),
    n: usize,
    features: Option<&FeatureTable>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(std::io::BufWriter::with_capacity(1 << 20, file));
    let header = id_names.iter().map(|s| s.to_string()).chain(features.into_iter().flat_map(|f| f.schema().iter().map(|s| s.name.clone())));
    out.write_record(header)?;
    let mut cell = String::new();
    for r in 0..n {
        let (a, b) = ids(r);
        cell.clear();
        let _ = write!(cell, "{a}");
        out.write_field(&cell)?;
        if let Some(b) = b {
            cell.clear();
            let _ = write!(cell, "{b}");
            out.write_field(&cell)?;
        }
        if let Some(f) = features {
            for c in 0..f.n_cols() {
                cell.clear();
                let _ = write!(cell, "{}", f.value(r, c));
                out.write_field(&cell)?;
            }
        }
        out.write_record(None::<&[u8]>)?;
    }
    let mut inner = out.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Writes the graph files and the manifest into an existing directory.
pub fn write_dataset_files(dir: &Path, g: &PartiteGraph, manifest: &DatasetManifest) -> Result<()> {
    for (i, p) in manifest.partites.iter().enumerate() {
        write_rows(&dir.join(&p.file), &["id"], |r| (r as u64, None), p.nodes as usize, g.node_features(i))?;
    }
    for (et, entry) in g.edge_types().iter().zip(&manifest.edge_types) {
        write_rows(
            &dir.join(&entry.file),
            &["src", "dst"],
            |r| (et.edges[r].0, Some(et.edges[r].1)),
            et.edges.len(),
            et.features.as_ref(),
        )?;
    }
    write_json(&dir.join(MANIFEST), manifest)
}

/// Writes a full dataset directory atomically, with stage timings kept in
/// a separate file so the rest of the output is reproducible byte for byte.
pub fn write_dataset(dir: &Path, g: &PartiteGraph, manifest: &DatasetManifest, timings: &Timings) -> Result<()> {
    write_atomic(dir, |tmp| {
        write_dataset_files(tmp, g, manifest)?;
        write_json(&tmp.join(TIMINGS), timings)
    })
}

fn kinds_of(columns: &[ColumnEntry]) -> HashMap<String, ColumnKind> {
    columns.iter().map(|c| (c.name.clone(), c.kind)).collect()
}

fn read_table(path: &Path, kinds: HashMap<String, ColumnKind>, ids: &[&str], expected: &[ColumnEntry]) -> Result<(FeatureTable, FeatureTable)> {
    let table = FeatureTable::read_csv(path, &kinds)?;
    let names: Vec<&str> = table.schema().iter().map(|s| s.name.as_str()).collect();
    let want: Vec<&str> = ids.iter().copied().chain(expected.iter().map(|c| c.name.as_str())).collect();
    if names != want {
        let diff = names
            .iter()
            .filter(|n| !want.contains(n))
            .chain(want.iter().filter(|n| !names.contains(n)))
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        return Err(if diff.is_empty() {
            Error::SchemaMismatch(vec![format!("column order of {}", path.display())])
        } else {
            Error::SchemaMismatch(diff)
        });
    }
    let id_cols: Vec<usize> = (0..ids.len()).collect();
    let rest: Vec<usize> = (ids.len()..table.n_cols()).collect();
    Ok((table.select_columns(&id_cols), table.select_columns(&rest)))
}

fn id_values(t: &FeatureTable, col: usize, bound: u64, path: &Path) -> Result<Vec<u64>> {
    let v = t.column(col).as_continuous().expect("id columns are read as numbers");
    v.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < bound as f64 {
                Ok(x as u64)
            } else {
                Err(Error::Data(format!("{}: node id {x} is not in 0..{bound}", path.display())))
            }
        })
        .collect()
}

/// Reads a dataset directory back into a graph.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, PartiteGraph)> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported dataset format version {}", manifest.format_version)));
    }
    let mut partites = Vec::new();
    let mut node_features = Vec::new();
    for p in &manifest.partites {
        let path = dir.join(&p.file);
        let mut kinds = kinds_of(&p.columns);
        kinds.insert("id".into(), ColumnKind::Continuous);
        let (ids, features) = read_table(&path, kinds, &["id"], &p.columns)?;
        if ids.n_rows() as u64 != p.nodes {
            return Err(Error::Data(format!("{}: {} rows, manifest says {}", path.display(), ids.n_rows(), p.nodes)));
        }
        let order = id_values(&ids, 0, p.nodes, &path)?;
        if order.iter().enumerate().any(|(i, &id)| id != i as u64) {
            return Err(Error::Data(format!("{}: node ids must be 0..{} in order", path.display(), p.nodes)));
        }
        partites.push(Partite { name: p.name.clone(), node_count: p.nodes });
        node_features.push((features.n_cols() > 0).then_some(features));
    }
    let index: BTreeMap<&str, usize> = manifest.partites.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
    let mut edge_types = Vec::new();
    for e in &manifest.edge_types {
        let find = |name: &str| {
            index.get(name).copied().ok_or_else(|| Error::Data(format!("edge type `{}` references unknown partite `{name}`", e.name)))
        };
        let (src, dst) = (find(&e.src)?, find(&e.dst)?);
        let path = dir.join(&e.file);
        let mut kinds = kinds_of(&e.columns);
        kinds.insert("src".into(), ColumnKind::Continuous);
        kinds.insert("dst".into(), ColumnKind::Continuous);
        let (ids, features) = read_table(&path, kinds, &["src", "dst"], &e.columns)?;
        let s = id_values(&ids, 0, partites[src].node_count, &path)?;
        let d = id_values(&ids, 1, partites[dst].node_count, &path)?;
        edge_types.push(EdgeSet {
            name: e.name.clone(),
            src,
            dst,
            edges: s.into_iter().zip(d).collect(),
            features: (features.n_cols() > 0).then_some(features),
        });
    }
    Ok((manifest.clone(), PartiteGraph::new(partites, edge_types, node_features)?))
}

/// Runs `write` against a scratch directory next to `dir` and renames it
/// into place only on success. An existing `dir` is replaced when it is
/// empty or holds a previous output (a `manifest.json`); anything else is
/// refused rather than deleted.
pub fn write_atomic(dir: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if dir.exists() {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.count();
        if entries > 0 && !dir.join(MANIFEST).is_file() {
            return Err(Error::Config(format!("output directory {} exists and is not a previous output", dir.display())));
        }
    }
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
    if let Err(e) = write(&tmp) {
        let _ = std::fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{Column, ColumnSpec};

    fn graph() -> PartiteGraph {
        let f = FeatureTable::new(
            vec![ColumnSpec::continuous("amount"), ColumnSpec::categorical("kind", ["a", "b,c"])],
            vec![Column::Continuous(vec![1.5, -2.0, 0.1]), Column::Categorical(vec![0, 1, 1])],
        )
        .unwrap();
        let nf = FeatureTable::new(vec![ColumnSpec::continuous("age")], vec![Column::Continuous(vec![30.0, 41.25])]).unwrap();
        PartiteGraph::new(
            vec![Partite { name: "user".into(), node_count: 2 }, Partite { name: "shop".into(), node_count: 3 }],
            vec![EdgeSet { name: "txn".into(), src: 0, dst: 1, edges: vec![(0, 0), (0, 2), (1, 1)], features: Some(f) }],
            vec![Some(nf), None],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds");
        let g = graph();
        write_dataset(&out, &g, &manifest_for(&g, "test", Some(3), None), &Timings::default()).unwrap();
        let (m, back) = read_dataset(&out).unwrap();
        assert_eq!(m.edge_types[0].edges, 3);
        assert!((m.edge_types[0].density - 0.5).abs() < 1e-12);
        assert_eq!(back, g);
    }

    #[test]
    fn refuses_foreign_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("keep.txt"), "x").unwrap();
        let g = graph();
        let err = write_dataset(dir.path(), &g, &manifest_for(&g, "test", None, None), &Timings::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(dir.path().join("keep.txt").exists());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("ds");
        let r = write_atomic(&out, |tmp| {
            std::fs::write(tmp.join("half"), "x").unwrap();
            Err(Error::Fit("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
