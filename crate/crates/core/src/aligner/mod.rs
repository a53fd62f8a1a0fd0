//! Aligner: pairs generated feature rows with generated edges.
//!
//! A boosted-tree regressor learns each feature column from the structural
//! features of an edge's endpoints. At generation time every edge gets a
//! predicted feature vector and rows are assigned to edges without
//! replacement so that predictions and rows agree as well as possible.

mod gbt;

pub use gbt::{fit_ensemble, Binned, BoostConfig, Ensemble, Tree};

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{structural_features, PartiteGraph, STRUCT_WIDTH};
use crate::rng::{self, domain};
use crate::table::{Column, ColumnSpec, FeatureTable};

/// Input width: structural features of the source then the destination.
pub const INPUT_WIDTH: usize = 2 * STRUCT_WIDTH;
pub const MIN_TRAIN_EDGES: usize = 10;
/// Most frequent classes that get their own ensemble; the rest share an
/// implicit "other" slot.
pub const MAX_CLASSES: usize = 16;
pub const MAX_TRAIN_ROWS: usize = 100_000;
/// Largest edge count accepted by [`AlignMode::Exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    #[default]
    Ranked,
    Exhaustive,
    Random,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranked" => Ok(AlignMode::Ranked),
            "exhaustive" => Ok(AlignMode::Exhaustive),
            "random" => Ok(AlignMode::Random),
            _ => Err(Error::Config(format!("unknown aligner mode '{s}', expected ranked, exhaustive or random"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Target {
    Continuous {
        column: String,
        mean: f64,
        sd: f64,
        ensemble: Ensemble,
    },
    Categorical {
        column: String,
        /// Vocabulary codes with their own ensemble, most frequent first.
        classes: Vec<u32>,
        ensembles: Vec<Ensemble>,
    },
}

impl Target {
    pub fn column(&self) -> &str {
        match self {
            Target::Continuous { column, .. } | Target::Categorical { column, .. } => column,
        }
    }

    /// Width of this target's block in a predicted vector.
    pub fn width(&self) -> usize {
        match self {
            Target::Continuous { .. } => 1,
            Target::Categorical { classes, .. } => classes.len() + 1,
        }
    }
}

/// Slice of a predicted vector belonging to one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub width: usize,
    pub categorical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignerModel {
    pub input_width: usize,
    pub config: BoostConfig,
    /// One target per feature column, in schema order.
    pub targets: Vec<Target>,
}

impl AlignerModel {
    pub fn blocks(&self) -> Vec<Block> {
        let mut start = 0;
        self.targets
            .iter()
            .map(|t| {
                let b = Block { start, width: t.width(), categorical: matches!(t, Target::Categorical { .. }) };
                start += b.width;
                b
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.targets.iter().map(Target::width).sum()
    }

    /// Encodes row `row` of `table` in the layout of a prediction: continuous
    /// cells as-is, categorical cells one-hot over the modelled classes plus
    /// "other".
    pub fn encode_row(&self, table: &FeatureTable, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        for ((t, b), col) in self.targets.iter().zip(self.blocks()).zip(table.columns()) {
            match (t, col) {
                (Target::Continuous { .. }, Column::Continuous(v)) => out[b.start] = v[row],
                (Target::Categorical { classes, .. }, Column::Categorical(v)) => {
                    let slot = classes.iter().position(|&c| c == v[row]).unwrap_or(classes.len());
                    out[b.start + slot] = 1.0;
                }
                _ => unreachable!("table checked against the model"),
            }
        }
        out
    }

    fn check_table(&self, table: &FeatureTable) -> Result<()> {
        let names: Vec<&str> = table.schema().iter().map(|c| c.name.as_str()).collect();
        let expected: Vec<&str> = self.targets.iter().map(Target::column).collect();
        if names != expected {
            return Err(Error::SchemaMismatch(
                names.iter().chain(&expected).filter(|n| !names.contains(n) || !expected.contains(n)).map(|s| s.to_string()).collect(),
            ));
        }
        Ok(())
    }
}

/// Edge inputs for every edge of `edge_type`, from freshly computed
/// structural features.
pub fn edge_inputs(g: &PartiteGraph, edge_type: usize) -> Vec<Vec<f64>> {
    structural_features(g).edge_inputs(g, edge_type).into_iter().map(|r| r.to_vec()).collect()
}

/// Trains one ensemble per continuous column and one per modelled class of
/// every categorical column. `table` holds one row per input row.
pub fn fit_aligner(inputs: &[Vec<f64>], table: &FeatureTable, cfg: BoostConfig, seed: u64) -> Result<AlignerModel> {
    if inputs.len() != table.n_rows() {
        return Err(Error::Data(format!("{} input rows but {} feature rows", inputs.len(), table.n_rows())));
    }
    if inputs.len() < MIN_TRAIN_EDGES {
        return Err(Error::Fit(format!(
            "the aligner needs at least {MIN_TRAIN_EDGES} edges to train, got {}",
            inputs.len()
        )));
    }
    if let Some(r) = inputs.iter().position(|r| r.len() != INPUT_WIDTH) {
        return Err(Error::Data(format!("input row {r} has width {}, expected {INPUT_WIDTH}", inputs[r].len())));
    }
    let rows: Vec<usize> = if inputs.len() > MAX_TRAIN_ROWS {
        let mut r = rng::stream(seed, domain::ALIGN, 1);
        let mut idx = index::sample(&mut r, inputs.len(), MAX_TRAIN_ROWS).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..inputs.len()).collect()
    };
    let x: Vec<Vec<f64>> = rows.iter().map(|&i| inputs[i].clone()).collect();
    let binned = Binned::new(&x, INPUT_WIDTH);

    enum Job<'a> {
        Cont(&'a [f64]),
        Class(&'a [u32], u32),
    }
    let mut jobs = Vec::new();
    let mut classes_of = Vec::new();
    for col in table.columns() {
        match col {
            Column::Continuous(v) => {
                jobs.push(Job::Cont(v));
                classes_of.push(None);
            }
            Column::Categorical(v) => {
                let classes = top_classes(v);
                for &c in &classes {
                    jobs.push(Job::Class(v, c));
                }
                classes_of.push(Some(classes));
            }
        }
    }
    let mut fitted: std::collections::VecDeque<Ensemble> = jobs
        .par_iter()
        .map(|job| {
            let y: Vec<f64> = match job {
                Job::Cont(v) => rows.iter().map(|&i| v[i]).collect(),
                Job::Class(v, c) => rows.iter().map(|&i| (v[i] == *c) as u8 as f64).collect(),
            };
            fit_ensemble(&binned, &x, &y, &cfg)
        })
        .collect::<Vec<_>>()
        .into();

    let mut targets = Vec::with_capacity(table.n_cols());
    for ((spec, col), classes) in table.schema().iter().zip(table.columns()).zip(classes_of) {
        targets.push(match (col, classes) {
            (Column::Continuous(v), None) => {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                Target::Continuous { column: spec.name.clone(), mean, sd, ensemble: fitted.pop_front().expect("ensemble") }
            }
            (Column::Categorical(_), Some(classes)) => {
                let ensembles = (0..classes.len()).map(|_| fitted.pop_front().expect("ensemble")).collect();
                Target::Categorical { column: spec.name.clone(), classes, ensembles }
            }
            _ => unreachable!(),
        });
    }
    Ok(AlignerModel { input_width: INPUT_WIDTH, config: cfg, targets })
}

fn top_classes(v: &[u32]) -> Vec<u32> {
    let mut counts = std::collections::BTreeMap::<u32, usize>::new();
    for &c in v {
        *counts.entry(c).or_default() += 1;
    }
    let mut by_freq: Vec<(u32, usize)> = counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    by_freq.into_iter().take(MAX_CLASSES).map(|x| x.0).collect()
}

/// One predicted vector per input row. Categorical blocks hold raw class
/// scores, the last slot being `1 - sum` clamped at 0 for unmodelled classes.
pub fn predict_features(model: &AlignerModel, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(r) = inputs.iter().position(|r| r.len() != model.input_width) {
        return Err(Error::Data(format!(
            "input row {r} has width {}, the aligner expects {}",
            inputs[r].len(),
            model.input_width
        )));
    }
    Ok(inputs
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(model.width());
            for t in &model.targets {
                match t {
                    Target::Continuous { ensemble, .. } => out.push(ensemble.predict(x)),
                    Target::Categorical { ensembles, .. } => {
                        let scores: Vec<f64> = ensembles.iter().map(|e| e.predict(x)).collect();
                        let other = (1.0 - scores.iter().sum::<f64>()).max(0.0);
                        out.extend(scores);
                        out.push(other);
                    }
                }
            }
            out
        })
        .collect())
}

/// `-sum (pred - x)^2` over continuous blocks plus the cosine between
/// predicted scores and the candidate's one-hot for categorical blocks.
/// Higher is better.
pub fn similarity(pred: &[f64], candidate: &[f64], blocks: &[Block]) -> f64 {
    blocks
        .iter()
        .map(|b| {
            let p = &pred[b.start..b.start + b.width];
            let c = &candidate[b.start..b.start + b.width];
            if b.categorical {
                let dot: f64 = p.iter().zip(c).map(|(a, b)| a * b).sum();
                let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nc = c.iter().map(|a| a * a).sum::<f64>().sqrt();
                if np == 0.0 || nc == 0.0 {
                    0.0
                } else {
                    dot / (np * nc)
                }
            } else {
                -(p[0] - c[0]).powi(2)
            }
        })
        .sum()
}

/// Chooses a distinct row for every edge. Returns `rows[edge]`.
pub fn assign(
    preds: &[Vec<f64>],
    table: &FeatureTable,
    model: Option<&AlignerModel>,
    mode: AlignMode,
    seed: u64,
) -> Result<Vec<usize>> {
    let (e, r) = (preds.len(), table.n_rows());
    if r < e {
        return Err(Error::Data(format!("{r} feature rows cannot cover {e} edges")));
    }
    let model = match (mode, model) {
        (AlignMode::Random, _) | (_, None) => return Ok(random_assignment(e, r, seed)),
        (_, Some(m)) => m,
    };
    model.check_table(table)?;
    match mode {
        AlignMode::Exhaustive => exhaustive_assignment(preds, table, model),
        _ => Ok(ranked_assignment(preds, table, model, seed)),
    }
}

fn random_assignment(e: usize, r: usize, seed: u64) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..r).collect();
    rows.shuffle(&mut rng::stream(seed, domain::ALIGN, 0));
    rows.truncate(e);
    rows
}

fn cmp_keys(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Rank matching on the continuous columns (first one primary, later ones
/// break ties, then the index). With more rows than edges the rows at evenly
/// spaced ranks are used, which keeps the marginal of the primary column.
fn ranked_assignment(preds: &[Vec<f64>], table: &FeatureTable, model: &AlignerModel, seed: u64) -> Vec<usize> {
    let (e, r) = (preds.len(), table.n_rows());
    let blocks = model.blocks();
    let cont: Vec<(usize, &[f64])> = model
        .targets
        .iter()
        .zip(&blocks)
        .zip(table.columns())
        .filter_map(|((t, b), col)| match t {
            Target::Continuous { .. } => Some((b.start, col.as_continuous().expect("continuous column"))),
            _ => None,
        })
        .collect();
    if !cont.is_empty() {
        let edge_keys: Vec<Vec<f64>> = preds.iter().map(|p| cont.iter().map(|(s, _)| p[*s]).collect()).collect();
        let mut edges: Vec<usize> = (0..e).collect();
        edges.par_sort_by(|&a, &b| cmp_keys(&edge_keys[a], &edge_keys[b]).then(a.cmp(&b)));
        let mut rows: Vec<usize> = (0..r).collect();
        rows.par_sort_by(|&a, &b| {
            cont.iter().map(|(_, v)| v[a].total_cmp(&v[b])).find(|o| o.is_ne()).unwrap_or(a.cmp(&b))
        });
        let mut out = vec![0usize; e];
        for (i, &edge) in edges.iter().enumerate() {
            let rank = if r == e { i } else { ((2 * i + 1) * r) / (2 * e) };
            out[edge] = rows[rank];
        }
        return out;
    }
    let first_cat = model.targets.iter().zip(&blocks).zip(table.columns()).find_map(|((t, b), col)| match t {
        Target::Categorical { classes, .. } => Some((*b, classes, col.as_categorical().expect("categorical column"))),
        _ => None,
    });
    let Some((block, classes, codes)) = first_cat else {
        return (0..e).collect();
    };
    // class-score greedy: confident edges first, each takes a row of its
    // best-scoring class that still has rows left
    let pool: Vec<usize> = if r > e {
        let mut idx = index::sample(&mut rng::stream(seed, domain::ALIGN, 2), r, e).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..r).collect()
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); block.width];
    for &row in &pool {
        let slot = classes.iter().position(|&c| c == codes[row]).unwrap_or(classes.len());
        buckets[slot].push(row);
    }
    let mut cursor = vec![0usize; block.width];
    let scores = |edge: usize| &preds[edge][block.start..block.start + block.width];
    let confidence: Vec<f64> = (0..e).map(|i| scores(i).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut order: Vec<usize> = (0..e).collect();
    order.sort_by(|&a, &b| confidence[b].total_cmp(&confidence[a]).then(a.cmp(&b)));
    let mut out = vec![0usize; e];
    let mut slots: Vec<usize> = (0..block.width).collect();
    for edge in order {
        let s = scores(edge);
        slots.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        let slot = *slots.iter().find(|&&k| cursor[k] < buckets[k].len()).expect("pool holds one row per edge");
        out[edge] = buckets[slot][cursor[slot]];
        cursor[slot] += 1;
    }
    out
}

/// Edges in index order each take the remaining row of highest similarity.
/// Continuous blocks are compared in units of the training standard
/// deviation so that no column dominates by scale.
fn exhaustive_assignment(preds: &[Vec<f64>], table: &FeatureTable, model: &AlignerModel) -> Result<Vec<usize>> {
    let (e, r) = (preds.len(), table.n_rows());
    if e > EXHAUSTIVE_LIMIT {
        return Err(Error::Config(format!(
            "exhaustive alignment is limited to {EXHAUSTIVE_LIMIT} edges, got {e}; use the ranked mode"
        )));
    }
    let blocks = model.blocks();
    let standardize = |v: &mut Vec<f64>| {
        for (t, b) in model.targets.iter().zip(&blocks) {
            if let Target::Continuous { mean, sd, .. } = t {
                let sd = if *sd > 0.0 { *sd } else { 1.0 };
                v[b.start] = (v[b.start] - mean) / sd;
            }
        }
    };
    let candidates: Vec<Vec<f64>> = (0..r)
        .map(|i| {
            let mut v = model.encode_row(table, i);
            standardize(&mut v);
            v
        })
        .collect();
    let mut used = vec![false; r];
    let mut out = Vec::with_capacity(e);
    for p in preds {
        let mut p = p.clone();
        standardize(&mut p);
        let best = (0..r)
            .into_par_iter()
            .filter(|&i| !used[i])
            .map(|i| (similarity(&p, &candidates[i], &blocks), i))
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
            .expect("enough rows remain");
        used[best.1] = true;
        out.push(best.1);
    }
    Ok(out)
}

fn strip_prefix(table: &FeatureTable, prefix: &str) -> Option<FeatureTable> {
    let cols: Vec<usize> = (0..table.n_cols()).filter(|&c| table.schema()[c].name.starts_with(prefix)).collect();
    if cols.is_empty() {
        return None;
    }
    let picked = table.select_columns(&cols);
    let schema: Vec<ColumnSpec> = picked
        .schema()
        .iter()
        .map(|s| ColumnSpec { name: s.name[prefix.len()..].to_string(), ..s.clone() })
        .collect();
    Some(FeatureTable::new(schema, picked.columns().to_vec()).expect("same columns"))
}

/// Splits an edge-centric table whose row `i` belongs to edge `i` into edge
/// features and `src.` / `dst.` node features, and attaches them to `g`.
///
/// Node features are taken from the first edge that touches the node; nodes
/// no edge touches take rows of `fill` in turn (or of `table` when `fill` is
/// `None`). Partites that already carry node features are left alone.
pub fn attach_features(g: &mut PartiteGraph, edge_type: usize, table: &FeatureTable, fill: Option<&FeatureTable>) -> Result<()> {
    let et = g.edge_type(edge_type).clone();
    if table.n_rows() != et.edges.len() {
        return Err(Error::Data(format!("{} feature rows for {} edges", table.n_rows(), et.edges.len())));
    }
    let edge_cols: Vec<usize> = (0..table.n_cols())
        .filter(|&c| {
            let n = &table.schema()[c].name;
            !n.starts_with("src.") && !n.starts_with("dst.")
        })
        .collect();
    g.set_edge_features(edge_type, if edge_cols.is_empty() { None } else { Some(table.select_columns(&edge_cols)) })?;

    let src = strip_prefix(table, "src.");
    let dst = strip_prefix(table, "dst.");
    let fill_src = fill.and_then(|f| strip_prefix(f, "src."));
    let fill_dst = fill.and_then(|f| strip_prefix(f, "dst."));
    let mut targets: Vec<(usize, Vec<(&FeatureTable, bool)>, Option<&FeatureTable>)> = Vec::new();
    if et.src == et.dst {
        let parts: Vec<(&FeatureTable, bool)> = src.iter().map(|t| (t, true)).chain(dst.iter().map(|t| (t, false))).collect();
        if !parts.is_empty() {
            targets.push((et.src, parts, fill_src.as_ref().or(fill_dst.as_ref())));
        }
    } else {
        if let Some(t) = &src {
            targets.push((et.src, vec![(t, true)], fill_src.as_ref()));
        }
        if let Some(t) = &dst {
            targets.push((et.dst, vec![(t, false)], fill_dst.as_ref()));
        }
    }
    for (partite, parts, fill_part) in targets {
        if g.node_features(partite).is_some() {
            continue;
        }
        let n = g.partites()[partite].node_count as usize;
        let reference = parts[0].0;
        let parts: Vec<(&FeatureTable, bool)> = parts.into_iter().filter(|(t, _)| t.schema() == reference.schema()).collect();
        let filler = fill_part.filter(|f| f.schema() == reference.schema() && f.n_rows() > 0).unwrap_or(reference);
        if filler.n_rows() == 0 {
            continue;
        }
        // (part, row) per node; part == parts.len() means the filler table
        let mut chosen: Vec<Option<(usize, usize)>> = vec![None; n];
        for (i, &(s, d)) in et.edges.iter().enumerate() {
            for (p, (_, is_src)) in parts.iter().enumerate() {
                let node = if *is_src { s } else { d } as usize;
                chosen[node].get_or_insert((p, i));
            }
        }
        let mut next_fill = 0usize;
        let picks: Vec<(usize, usize)> = chosen
            .into_iter()
            .map(|c| {
                c.unwrap_or_else(|| {
                    next_fill += 1;
                    (parts.len(), (next_fill - 1) % filler.n_rows())
                })
            })
            .collect();
        let column_of = |p: usize, c: usize| if p == parts.len() { filler.column(c) } else { parts[p].0.column(c) };
        let columns: Vec<Column> = (0..reference.n_cols())
            .map(|c| match reference.column(c) {
                Column::Continuous(_) => Column::Continuous(
                    picks.iter().map(|&(p, i)| column_of(p, c).as_continuous().expect("continuous")[i]).collect(),
                ),
                Column::Categorical(_) => Column::Categorical(
                    picks.iter().map(|&(p, i)| column_of(p, c).as_categorical().expect("categorical")[i]).collect(),
                ),
            })
            .collect();
        g.set_node_features(partite, Some(FeatureTable::new(reference.schema().to_vec(), columns)?))?;
    }
    Ok(())
}

/// Predicts, assigns and attaches: row `assignment[i]` of `table` becomes
/// the features of edge `i`. Returns the assignment.
pub fn align(
    g: &mut PartiteGraph,
    edge_type: usize,
    table: &FeatureTable,
    model: Option<&AlignerModel>,
    mode: AlignMode,
    seed: u64,
) -> Result<Vec<usize>> {
    let e = g.edge_type(edge_type).edges.len();
    let preds = match (mode, model) {
        (AlignMode::Random, _) | (_, None) => vec![Vec::new(); e],
        (_, Some(m)) => predict_features(m, &edge_inputs(g, edge_type))?,
    };
    let assignment = assign(&preds, table, model, mode, seed)?;
    let used = table.take_rows(&assignment);
    let mut spare: Vec<usize> = {
        let mut taken = vec![false; table.n_rows()];
        assignment.iter().for_each(|&i| taken[i] = true);
        (0..table.n_rows()).filter(|&i| !taken[i]).collect()
    };
    if spare.is_empty() {
        spare = (0..table.n_rows()).collect();
    }
    let fill = table.take_rows(&spare);
    attach_features(g, edge_type, &used, Some(&fill))?;
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_hand_computed() {
        let blocks = [
            Block { start: 0, width: 1, categorical: false },
            Block { start: 1, width: 1, categorical: false },
        ];
        assert_eq!(similarity(&[1.0, 0.0], &[1.0, 0.0], &blocks), 0.0);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0], &blocks), -2.0);
        let cat = [Block { start: 0, width: 3, categorical: true }];
        assert!((similarity(&[0.0, 2.0, 0.0], &[0.0, 1.0, 0.0], &cat) - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &cat), 0.0);
    }

    #[test]
    fn top_classes_by_frequency() {
        let v: Vec<u32> = (0..40).map(|i| (i % 20) as u32).chain([7, 7, 3]).collect();
        let c = top_classes(&v);
        assert_eq!(c.len(), MAX_CLASSES);
        assert_eq!(&c[..3], &[7, 3, 0]);
    }

    #[test]
    fn mode_names_parse() {
        assert_eq!("ranked".parse::<AlignMode>().unwrap(), AlignMode::Ranked);
        assert!("best".parse::<AlignMode>().is_err());
    }
}
