use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeSet, Partite, PartiteGraph};
use crate::error::{Error, Result};
use crate::table::{Column, ColumnSpec, FeatureTable};

/// How rows of a flat table turn into nodes and edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSpec {
    pub partites: Vec<PartiteSpec>,
    pub edges: Vec<EdgeSpec>,
    /// Columns holding per-node attributes, keyed by partite name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_features: BTreeMap<String, Vec<String>>,
}

/// A node class whose key is the concatenation of `columns`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartiteSpec {
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeCondition {
    #[default]
    SameRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub condition: EdgeCondition,
    /// Key columns for the source endpoint when they differ from the
    /// partite's default columns (e.g. both endpoints in one partite).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst_columns: Option<Vec<String>>,
}

impl ConstructionSpec {
    /// Every column read as a node key.
    pub fn key_columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |c: &String| {
            if !out.contains(c) {
                out.push(c.clone());
            }
        };
        self.partites.iter().flat_map(|p| &p.columns).for_each(&mut push);
        for e in &self.edges {
            e.src_columns.iter().chain(&e.dst_columns).flatten().for_each(&mut push);
        }
        out
    }

    pub fn node_feature_columns(&self) -> Vec<String> {
        self.node_features.values().flatten().cloned().collect()
    }

    /// Checks structural consistency and that every referenced column exists
    /// among `available`.
    pub fn validate(&self, available: &[String]) -> Result<()> {
        if self.partites.is_empty() {
            return Err(Error::Config("construction spec declares no partites".into()));
        }
        if self.edges.is_empty() {
            return Err(Error::Config("construction spec declares no edge types".into()));
        }
        let mut names = HashSet::new();
        for p in &self.partites {
            if !names.insert(p.name.as_str()) {
                return Err(Error::Config(format!("duplicate partite `{}`", p.name)));
            }
            if p.columns.is_empty() {
                return Err(Error::Config(format!("partite `{}` has no key columns", p.name)));
            }
        }
        for e in &self.edges {
            for end in [&e.src, &e.dst] {
                if !names.contains(end.as_str()) {
                    return Err(Error::Config(format!("edge type `{}` references unknown partite `{end}`", e.name)));
                }
            }
        }
        for p in self.node_features.keys() {
            if !names.contains(p.as_str()) {
                return Err(Error::Config(format!("node features declared for unknown partite `{p}`")));
            }
        }
        for c in self.key_columns().iter().chain(&self.node_feature_columns()) {
            if !available.contains(c) {
                return Err(Error::MissingColumn(c.clone()));
            }
        }
        Ok(())
    }
}

/// Turns a flat table into a partite graph. Every row yields one edge per
/// declared edge type; node ids are dense per partite in order of first
/// appearance; duplicate `(src, dst)` pairs keep the first row.
pub fn build_graph_from_table(table: &FeatureTable, spec: &ConstructionSpec) -> Result<PartiteGraph> {
    let available: Vec<String> = table.schema().iter().map(|c| c.name.clone()).collect();
    spec.validate(&available)?;
    if table.n_rows() == 0 {
        return Err(Error::Data("cannot build a graph from an empty table".into()));
    }
    let col = |name: &String| table.column_index(name).expect("validated");
    let partite_idx: HashMap<&str, usize> = spec.partites.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();

    struct Endpoint {
        partite: usize,
        columns: Vec<usize>,
    }
    let endpoints: Vec<(Endpoint, Endpoint)> = spec
        .edges
        .iter()
        .map(|e| {
            let ps = partite_idx[e.src.as_str()];
            let pd = partite_idx[e.dst.as_str()];
            let sc = e.src_columns.as_ref().unwrap_or(&spec.partites[ps].columns);
            let dc = e.dst_columns.as_ref().unwrap_or(&spec.partites[pd].columns);
            (
                Endpoint { partite: ps, columns: sc.iter().map(col).collect() },
                Endpoint { partite: pd, columns: dc.iter().map(col).collect() },
            )
        })
        .collect();

    let mut dictionaries: Vec<HashMap<String, u64>> = vec![HashMap::new(); spec.partites.len()];
    // first row in which each node appears, for node features
    let mut first_row: Vec<Vec<usize>> = vec![Vec::new(); spec.partites.len()];
    let mut edge_lists: Vec<Vec<Edge>> = vec![Vec::new(); spec.edges.len()];
    let mut edge_rows: Vec<Vec<usize>> = vec![Vec::new(); spec.edges.len()];
    let mut seen: Vec<HashSet<Edge>> = vec![HashSet::new(); spec.edges.len()];

    let mut key = String::new();
    let mut intern = |ep: &Endpoint, row: usize, dicts: &mut Vec<HashMap<String, u64>>, first: &mut Vec<Vec<usize>>| -> u64 {
        key.clear();
        for (i, &c) in ep.columns.iter().enumerate() {
            if i > 0 {
                key.push('\u{1f}');
            }
            use std::fmt::Write as _;
            let _ = write!(key, "{}", table.value(row, c));
        }
        let dict = &mut dicts[ep.partite];
        if let Some(&id) = dict.get(key.as_str()) {
            return id;
        }
        let id = dict.len() as u64;
        dict.insert(key.clone(), id);
        first[ep.partite].push(row);
        id
    };

    for row in 0..table.n_rows() {
        for (e, (src, dst)) in endpoints.iter().enumerate() {
            let s = intern(src, row, &mut dictionaries, &mut first_row);
            let d = intern(dst, row, &mut dictionaries, &mut first_row);
            if seen[e].insert((s, d)) {
                edge_lists[e].push((s, d));
                edge_rows[e].push(row);
            }
        }
    }

    let key_cols = spec.key_columns();
    let node_cols = spec.node_feature_columns();
    let edge_feature_cols: Vec<usize> = table
        .schema()
        .iter()
        .enumerate()
        .filter(|(_, c)| !key_cols.contains(&c.name) && !node_cols.contains(&c.name))
        .map(|(i, _)| i)
        .collect();

    let partites: Vec<Partite> = spec
        .partites
        .iter()
        .zip(&dictionaries)
        .map(|(p, d)| Partite { name: p.name.clone(), node_count: d.len() as u64 })
        .collect();

    let edge_types = spec
        .edges
        .iter()
        .zip(edge_lists)
        .zip(&edge_rows)
        .zip(&endpoints)
        .map(|(((e, edges), rows), (src, dst))| {
            let features = (!edge_feature_cols.is_empty())
                .then(|| table.take_rows(rows).select_columns(&edge_feature_cols));
            EdgeSet { name: e.name.clone(), src: src.partite, dst: dst.partite, edges, features }
        })
        .collect();

    let node_features = spec
        .partites
        .iter()
        .zip(&first_row)
        .map(|(p, rows)| {
            spec.node_features.get(&p.name).filter(|c| !c.is_empty()).map(|cols| {
                let idx: Vec<usize> = cols.iter().map(col).collect();
                table.take_rows(rows).select_columns(&idx)
            })
        })
        .collect();

    PartiteGraph::new(partites, edge_types, node_features)
}

impl PartiteGraph {
    /// Flattens one edge type back into a table whose key columns hold node
    /// ids, with a construction spec that rebuilds the same graph from it.
    pub fn export_edge_table(&self, edge_type: usize) -> Result<(FeatureTable, ConstructionSpec)> {
        let et = self.edge_type(edge_type);
        let (src_name, dst_name) = (&self.partites()[et.src].name, &self.partites()[et.dst].name);
        let id_column = |name: &str, n: u64, ids: Vec<u32>| -> Result<FeatureTable> {
            FeatureTable::new(
                vec![ColumnSpec::categorical(name, (0..n.max(1)).map(|i| i.to_string()))],
                vec![Column::Categorical(ids)],
            )
        };
        let src_col = format!("{src_name}_id");
        let dst_col = if et.src == et.dst { format!("{dst_name}_dst_id") } else { format!("{dst_name}_id") };
        let src = id_column(&src_col, self.partites()[et.src].node_count, et.edges.iter().map(|e| e.0 as u32).collect())?;
        let dst = id_column(&dst_col, self.partites()[et.dst].node_count, et.edges.iter().map(|e| e.1 as u32).collect())?;
        let empty = FeatureTable::zero_width(et.edges.len());
        let features = et.features.as_ref().unwrap_or(&empty);
        let table = FeatureTable::hstack(&[&src, &dst, features])?;

        let mut partites = vec![PartiteSpec { name: src_name.clone(), columns: vec![src_col.clone()] }];
        let mut edge = EdgeSpec {
            name: et.name.clone(),
            src: src_name.clone(),
            dst: dst_name.clone(),
            condition: EdgeCondition::SameRow,
            src_columns: None,
            dst_columns: None,
        };
        if et.src == et.dst {
            edge.dst_columns = Some(vec![dst_col]);
        } else {
            partites.push(PartiteSpec { name: dst_name.clone(), columns: vec![dst_col] });
        }
        Ok((table, ConstructionSpec { partites, edges: vec![edge], node_features: BTreeMap::new() }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Value;

    fn bipartite_spec() -> ConstructionSpec {
        ConstructionSpec {
            partites: vec![
                PartiteSpec { name: "user".into(), columns: vec!["u".into()] },
                PartiteSpec { name: "merchant".into(), columns: vec!["m".into()] },
            ],
            edges: vec![EdgeSpec {
                name: "txn".into(),
                src: "user".into(),
                dst: "merchant".into(),
                condition: EdgeCondition::SameRow,
                src_columns: None,
                dst_columns: None,
            }],
            node_features: BTreeMap::new(),
        }
    }

    fn table(csv: &str) -> FeatureTable {
        let kinds = [("u", crate::table::ColumnKind::Categorical), ("m", crate::table::ColumnKind::Categorical)]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b))
            .collect();
        FeatureTable::read_csv_from(csv.as_bytes(), &kinds).unwrap()
    }

    #[test]
    fn three_rows_two_plus_two_nodes() {
        let t = table("u,m,amt\nu1,m1,1\nu1,m2,2\nu2,m1,3\n");
        let g = build_graph_from_table(&t, &bipartite_spec()).unwrap();
        assert_eq!(g.partites()[0].node_count, 2);
        assert_eq!(g.partites()[1].node_count, 2);
        assert_eq!(g.edge_type(0).edges, vec![(0, 0), (0, 1), (1, 0)]);
        let f = g.edge_type(0).features.as_ref().unwrap();
        assert_eq!(f.schema()[0].name, "amt");
    }

    #[test]
    fn duplicate_rows_keep_first_features() {
        let t = table("u,m,amt\nu1,m1,5\nu1,m1,9\n");
        let g = build_graph_from_table(&t, &bipartite_spec()).unwrap();
        assert_eq!(g.edge_type(0).edges.len(), 1);
        assert_eq!(g.edge_type(0).features.as_ref().unwrap().value(0, 0), Value::Num(5.0));
    }

    #[test]
    fn concatenated_keys() {
        let mut spec = bipartite_spec();
        spec.partites[0].columns = vec!["u".into(), "card".into()];
        let mut kinds: HashMap<String, _> = HashMap::new();
        kinds.insert("card".into(), crate::table::ColumnKind::Categorical);
        let t = FeatureTable::read_csv_from("u,card,m\na,1,x\na,2,x\na,1,y\n".as_bytes(), &kinds).unwrap();
        let g = build_graph_from_table(&t, &spec).unwrap();
        assert_eq!(g.partites()[0].node_count, 2);
        assert!(g.edge_type(0).features.is_none());
    }

    #[test]
    fn missing_column_is_named() {
        let mut spec = bipartite_spec();
        spec.partites[1].columns = vec!["merchant_id".into()];
        let t = table("u,m\na,b\n");
        match build_graph_from_table(&t, &spec) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "merchant_id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_table_is_an_error() {
        let t = table("u,m\n");
        assert!(matches!(build_graph_from_table(&t, &bipartite_spec()), Err(Error::Data(_))));
    }

    #[test]
    fn self_referential_keys_share_a_partite() {
        let spec = ConstructionSpec {
            partites: vec![PartiteSpec { name: "acct".into(), columns: vec!["from".into()] }],
            edges: vec![EdgeSpec {
                name: "pay".into(),
                src: "acct".into(),
                dst: "acct".into(),
                condition: EdgeCondition::SameRow,
                src_columns: None,
                dst_columns: Some(vec!["to".into()]),
            }],
            node_features: BTreeMap::new(),
        };
        let t = FeatureTable::read_csv_from("from,to\na,b\nb,a\nc,c\n".as_bytes(), &HashMap::new()).unwrap();
        let g = build_graph_from_table(&t, &spec).unwrap();
        assert_eq!(g.partites()[0].node_count, 3);
        assert_eq!(g.edge_type(0).edges, vec![(0, 1), (1, 0), (2, 2)]);
    }

    #[test]
    fn node_features_first_wins() {
        let mut spec = bipartite_spec();
        spec.node_features.insert("user".into(), vec!["age".into()]);
        let t = table("u,m,age,amt\nu1,m1,30,1\nu2,m1,40,2\nu1,m2,99,3\n");
        let g = build_graph_from_table(&t, &spec).unwrap();
        let nf = g.node_features(0).unwrap();
        assert_eq!(nf.value(0, 0), Value::Num(30.0));
        assert_eq!(nf.value(1, 0), Value::Num(40.0));
        assert_eq!(g.edge_type(0).features.as_ref().unwrap().n_cols(), 1);
        let centric = g.edge_centric_table(0).unwrap();
        let names: Vec<_> = centric.schema().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["amt", "src.age"]);
        assert_eq!(centric.value(2, 1), Value::Num(30.0));
    }

    #[test]
    fn rebuild_from_export_is_identity() {
        let t = table("u,m,amt\nu1,m1,1\nu1,m2,2\nu2,m1,3\nu1,m1,4\nu3,m3,5\n");
        let g = build_graph_from_table(&t, &bipartite_spec()).unwrap();
        let (flat, spec) = g.export_edge_table(0).unwrap();
        let again = build_graph_from_table(&flat, &spec).unwrap();
        assert_eq!(again.edge_type(0).edges, g.edge_type(0).edges);
        assert_eq!(again.edge_type(0).features, g.edge_type(0).features);
        assert_eq!(
            again.partites().iter().map(|p| p.node_count).collect::<Vec<_>>(),
            g.partites().iter().map(|p| p.node_count).collect::<Vec<_>>()
        );
    }
}
