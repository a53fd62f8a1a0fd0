//! Column-typed tabular data and CSV round-tripping.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Ordered distinct values, categorical columns only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Continuous,
            vocabulary: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, vocabulary: impl IntoIterator<Item = S>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            vocabulary: vocabulary.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }
}

/// Column storage. Categorical cells hold indices into the column vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_continuous(&self) -> Option<&[f64]> {
        match self {
            Column::Continuous(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Continuous(_) => None,
        }
    }

    fn take(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Cat(&'a str),
}

impl std::fmt::Display for Value<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    schema: Vec<ColumnSpec>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl FeatureTable {
    pub fn new(schema: Vec<ColumnSpec>, columns: Vec<Column>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Data(format!(
                "schema has {} columns but {} were supplied",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::Data(format!("column `{}` has {} rows, expected {n_rows}", spec.name, col.len())));
            }
            match (spec.kind, col) {
                (ColumnKind::Continuous, Column::Continuous(v)) => {
                    if let Some(r) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::Data(format!("non-finite value in column `{}` row {r}", spec.name)));
                    }
                }
                (ColumnKind::Categorical, Column::Categorical(v)) => {
                    if spec.vocabulary.is_empty() {
                        return Err(Error::Data(format!("categorical column `{}` has an empty vocabulary", spec.name)));
                    }
                    let n = spec.vocabulary.len() as u32;
                    if let Some(r) = v.iter().position(|&c| c >= n) {
                        return Err(Error::Data(format!("out-of-vocabulary value in column `{}` row {r}", spec.name)));
                    }
                }
                _ => return Err(Error::Data(format!("column `{}` storage does not match its kind", spec.name))),
            }
        }
        Ok(FeatureTable { schema, columns, n_rows })
    }

    /// Zero-row table with the given schema.
    pub fn empty(schema: Vec<ColumnSpec>) -> Self {
        let columns = schema
            .iter()
            .map(|s| match s.kind {
                ColumnKind::Continuous => Column::Continuous(Vec::new()),
                ColumnKind::Categorical => Column::Categorical(Vec::new()),
            })
            .collect();
        FeatureTable { schema, columns, n_rows: 0 }
    }

    /// Table with `n_rows` rows and no columns.
    pub fn zero_width(n_rows: usize) -> Self {
        FeatureTable {
            schema: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &[ColumnSpec] {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn value(&self, row: usize, col: usize) -> Value<'_> {
        match &self.columns[col] {
            Column::Continuous(v) => Value::Num(v[row]),
            Column::Categorical(v) => Value::Cat(&self.schema[col].vocabulary[v[row] as usize]),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: cols.iter().map(|&c| self.schema[c].clone()).collect(),
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    /// Prefixes every column name with `prefix`.
    pub fn with_prefix(mut self, prefix: &str) -> FeatureTable {
        for spec in &mut self.schema {
            spec.name = format!("{prefix}{}", spec.name);
        }
        self
    }

    /// Horizontal concatenation. All parts must have the same row count.
    pub fn hstack(parts: &[&FeatureTable]) -> Result<FeatureTable> {
        let mut schema = Vec::new();
        let mut columns = Vec::new();
        for part in parts {
            schema.extend(part.schema.iter().cloned());
            columns.extend(part.columns.iter().cloned());
        }
        if columns.is_empty() {
            let n_rows = parts.first().map_or(0, |p| p.n_rows);
            return Ok(FeatureTable { schema, columns, n_rows });
        }
        FeatureTable::new(schema, columns)
    }

    /// Builds a table from string cells. Columns listed in `kinds` use that
    /// kind; the rest are continuous when every cell parses as a finite number.
    pub fn from_records(
        header: Vec<String>,
        records: &[Vec<String>],
        kinds: &HashMap<String, ColumnKind>,
    ) -> Result<FeatureTable> {
        if let Some(dup) = first_duplicate(&header) {
            return Err(Error::Data(format!("duplicate column `{dup}` in header")));
        }
        let mut schema = Vec::with_capacity(header.len());
        let mut columns = Vec::with_capacity(header.len());
        for (j, name) in header.into_iter().enumerate() {
            for (r, rec) in records.iter().enumerate() {
                if rec[j].is_empty() {
                    return Err(Error::Data(format!("missing value in column `{name}` row {r}")));
                }
            }
            let kind = match kinds.get(&name) {
                Some(&k) => k,
                None if records.iter().all(|rec| parse_finite(&rec[j]).is_some()) => ColumnKind::Continuous,
                None => ColumnKind::Categorical,
            };
            match kind {
                ColumnKind::Continuous => {
                    let mut values = Vec::with_capacity(records.len());
                    for (r, rec) in records.iter().enumerate() {
                        let x = parse_finite(&rec[j]).ok_or_else(|| {
                            Error::Data(format!("column `{name}` row {r}: `{}` is not a finite number", rec[j]))
                        })?;
                        values.push(x);
                    }
                    schema.push(ColumnSpec::continuous(name));
                    columns.push(Column::Continuous(values));
                }
                ColumnKind::Categorical => {
                    let mut index: HashMap<&str, u32> = HashMap::new();
                    let mut vocabulary = Vec::new();
                    let mut codes = Vec::with_capacity(records.len());
                    for rec in records {
                        let next = vocabulary.len() as u32;
                        let code = *index.entry(rec[j].as_str()).or_insert_with(|| {
                            vocabulary.push(rec[j].clone());
                            next
                        });
                        codes.push(code);
                    }
                    if vocabulary.is_empty() {
                        // zero-row table: keep the column typed but give it a placeholder vocabulary
                        vocabulary.push(String::new());
                    }
                    schema.push(ColumnSpec::categorical(name, vocabulary));
                    columns.push(Column::Categorical(codes));
                }
            }
        }
        let n_rows = records.len();
        let mut table = FeatureTable::new(schema, columns)?;
        table.n_rows = n_rows;
        Ok(table)
    }

    pub fn read_csv(path: &Path, kinds: &HashMap<String, ColumnKind>) -> Result<FeatureTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file, kinds)
    }

    pub fn read_csv_from<R: Read>(reader: R, kinds: &HashMap<String, ColumnKind>) -> Result<FeatureTable> {
        let (header, records) = read_records(reader)?;
        Self::from_records(header, &records, kinds)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.schema.iter().map(|s| s.name.as_str()))?;
        let mut cell = String::new();
        for r in 0..self.n_rows {
            for c in 0..self.columns.len() {
                cell.clear();
                let _ = write!(cell, "{}", self.value(r, c));
                out.write_field(&cell)?;
            }
            out.write_record(None::<&[u8]>)?;
        }
        out.flush().map_err(|e| Error::Data(e.to_string()))
    }

    /// Column names paired with kinds, for manifests.
    pub fn kinds(&self) -> BTreeMap<String, ColumnKind> {
        self.schema.iter().map(|s| (s.name.clone(), s.kind)).collect()
    }
}

pub(crate) fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn first_duplicate(names: &[String]) -> Option<&str> {
    let mut seen = std::collections::HashSet::new();
    names.iter().find(|n| !seen.insert(n.as_str())).map(String::as_str)
}

/// Reads a headered CSV into raw string records.
pub fn read_records<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() {
        return Err(Error::Data("csv has no header row".into()));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        records.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_kinds_and_vocabulary_order() {
        let csv = "a,b,c\n1.5,x,3\n2,y,z\n-1,x,4\n";
        let t = FeatureTable::read_csv_from(csv.as_bytes(), &HashMap::new()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.schema()[0].kind, ColumnKind::Continuous);
        assert_eq!(t.schema()[1].vocabulary, vec!["x", "y"]);
        assert_eq!(t.schema()[2].kind, ColumnKind::Categorical);
        assert_eq!(t.value(1, 2), Value::Cat("z"));
    }

    #[test]
    fn kind_override_forces_categorical() {
        let kinds = HashMap::from([("id".to_string(), ColumnKind::Categorical)]);
        let t = FeatureTable::read_csv_from("id\n10\n20\n10\n".as_bytes(), &kinds).unwrap();
        assert_eq!(t.schema()[0].vocabulary, vec!["10", "20"]);
    }

    #[test]
    fn missing_cell_is_rejected() {
        let err = FeatureTable::read_csv_from("a,b\n1,\n".as_bytes(), &HashMap::new()).unwrap_err();
        assert!(err.to_string().contains("missing value in column `b`"));
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let csv = "amt,kind\n0.1,a\n1e-7,b\n123456.789,a\n";
        let t = FeatureTable::read_csv_from(csv.as_bytes(), &HashMap::new()).unwrap();
        let mut buf = Vec::new();
        t.write_csv_to(&mut buf).unwrap();
        let back = FeatureTable::read_csv_from(buf.as_slice(), &HashMap::new()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn rejects_out_of_vocabulary_codes() {
        let err = FeatureTable::new(vec![ColumnSpec::categorical("c", ["a"])], vec![Column::Categorical(vec![0, 1])]);
        assert!(err.is_err());
    }
}
