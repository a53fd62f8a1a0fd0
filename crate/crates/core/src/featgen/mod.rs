//! Feature generator: learns the joint distribution of feature rows and
//! samples new ones.
//!
//! Continuous columns are first encoded by a [`ContinuousNormalizer`] into a
//! mode index and a within-mode scalar. The `mixture` backend then fits a
//! latent-class model over all encoded columns, with the number of classes
//! picked by BIC; the `independent` backend keeps per-column marginals only.

mod mixture;
mod normalizer;

pub use mixture::Component;
pub use normalizer::{fit_normalizer, ContinuousNormalizer, MAX_MODES, MIN_FIT_VALUES};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::table::{Column, ColumnKind, ColumnSpec, FeatureTable};
use mixture::{fit_mixture, Encoded};

/// Component counts tried by the mixture backend.
pub const COMPONENT_CANDIDATES: [usize; 5] = [1, 2, 4, 8, 16];
/// Rows used to fit the mixture; larger tables are subsampled.
pub const MIXTURE_FIT_ROWS: usize = 20_000;
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mixture,
    Independent,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(Backend::Mixture),
            "independent" => Ok(Backend::Independent),
            _ => Err(Error::Config(format!("unknown feature backend '{s}', expected mixture or independent"))),
        }
    }
}

/// Width of a learned embedding for a vocabulary of `vocab` values.
pub fn embedding_size(vocab: usize) -> usize {
    assert!(vocab >= 1, "vocabulary must be non-empty");
    ((1.6 * (vocab as f64).powf(0.56)).round() as usize).min(600)
}

/// `(column, vocabulary size, embedding width)` for every categorical column.
pub fn embedding_spec(schema: &[ColumnSpec]) -> Vec<(String, usize, usize)> {
    schema
        .iter()
        .filter(|c| c.is_categorical())
        .map(|c| (c.name.clone(), c.vocabulary.len(), embedding_size(c.vocabulary.len())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub schema: Vec<ColumnSpec>,
    pub backend: Backend,
    /// One entry per column, `None` for categorical columns.
    pub normalizers: Vec<Option<ContinuousNormalizer>>,
    pub components: Vec<Component>,
    /// `(component count, BIC)` for every candidate that was fitted.
    pub bic: Vec<(usize, f64)>,
    pub fit_rows: usize,
}

impl FeatureModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

fn encode(table: &FeatureTable, normalizers: &[Option<ContinuousNormalizer>]) -> Encoded {
    let mut scalars = Vec::new();
    let mut factors = Vec::new();
    let mut sizes = Vec::new();
    for ((spec, col), norm) in table.schema().iter().zip(table.columns()).zip(normalizers) {
        match (col, norm) {
            (Column::Continuous(v), Some(norm)) => {
                let (modes, s): (Vec<u32>, Vec<f64>) = v
                    .par_iter()
                    .map(|&x| {
                        let (m, s) = norm.normalize(x);
                        (m as u32, s)
                    })
                    .unzip();
                factors.push(modes);
                scalars.push(s);
                sizes.push(norm.modes());
            }
            (Column::Categorical(v), None) => {
                factors.push(v.clone());
                sizes.push(spec.vocabulary.len());
            }
            _ => unreachable!("normalizers follow the schema"),
        }
    }
    Encoded { n: table.n_rows(), scalars, factors, sizes }
}

/// Fits a [`FeatureModel`] to `table`. Deterministic given `seed`.
pub fn fit_feature_model(table: &FeatureTable, backend: Backend, seed: u64) -> Result<FeatureModel> {
    if table.n_rows() == 0 {
        return Err(Error::Data("cannot fit a feature model to an empty table".into()));
    }
    let normalizers = table
        .columns()
        .iter()
        .enumerate()
        .map(|(j, col)| match col {
            Column::Continuous(v) => fit_normalizer(v, &mut rng::stream(seed, domain::FIT, 1 + j as u64)).map(Some),
            Column::Categorical(_) => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = rng::stream(seed, domain::FIT, 0);
    let data = encode(table, &normalizers).subsample(MIXTURE_FIT_ROWS, &mut r);

    let candidates: Vec<usize> = match backend {
        Backend::Independent => vec![1],
        Backend::Mixture => COMPONENT_CANDIDATES.iter().copied().filter(|&k| k <= data.n).collect(),
    };
    let mut bic = Vec::new();
    let mut best: Option<mixture::MixtureFit> = None;
    for k in candidates {
        let fit = fit_mixture(&data, k, &mut r);
        log::debug!("mixture k={k}: loglik {:.3}, bic {:.3}", fit.loglik, fit.bic);
        bic.push((k, fit.bic));
        if best.as_ref().is_none_or(|b| fit.bic < b.bic) {
            best = Some(fit);
        }
    }
    let components = best.expect("at least one candidate").components;
    Ok(FeatureModel { schema: table.schema().to_vec(), backend, normalizers, components, bic, fit_rows: data.n })
}

/// Inverse-CDF lookup on a cumulative table.
fn pick(cdf: &[f64], u: f64) -> usize {
    let x = u * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= x).min(cdf.len() - 1)
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Draws `count` i.i.d. rows. Rows are produced in fixed chunks, chunk `k`
/// from stream `k` of `seed`, so the output does not depend on the thread
/// count.
pub fn sample_features(model: &FeatureModel, count: usize, seed: u64) -> Result<FeatureTable> {
    if count == 0 {
        return Ok(FeatureTable::empty(model.schema.clone()));
    }
    if model.schema.is_empty() {
        return Ok(FeatureTable::zero_width(count));
    }
    let weights_cdf = cumulative(&model.components.iter().map(|c| c.weight).collect::<Vec<_>>());
    let tables_cdf: Vec<Vec<Vec<f64>>> =
        model.components.iter().map(|c| c.tables.iter().map(|t| cumulative(t)).collect()).collect();
    let cont_index: Vec<Option<usize>> = model
        .normalizers
        .iter()
        .scan(0usize, |n, norm| {
            Some(norm.as_ref().map(|_| {
                *n += 1;
                *n - 1
            }))
        })
        .collect();

    let chunks: Vec<Vec<Column>> = (0..count.div_ceil(SAMPLE_CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut r = rng::stream(seed, domain::FEATURES, ch as u64);
            let rows = SAMPLE_CHUNK.min(count - ch * SAMPLE_CHUNK);
            let mut cols: Vec<Column> = model
                .schema
                .iter()
                .map(|s| match s.kind {
                    ColumnKind::Continuous => Column::Continuous(Vec::with_capacity(rows)),
                    ColumnKind::Categorical => Column::Categorical(Vec::with_capacity(rows)),
                })
                .collect();
            for _ in 0..rows {
                let k = pick(&weights_cdf, r.random());
                let comp = &model.components[k];
                for (j, col) in cols.iter_mut().enumerate() {
                    let f = pick(&tables_cdf[k][j], r.random());
                    match col {
                        Column::Categorical(v) => v.push(f as u32),
                        Column::Continuous(v) => {
                            let norm = model.normalizers[j].as_ref().expect("continuous column has a normalizer");
                            let ci = cont_index[j].expect("continuous ordinal");
                            let z: f64 = r.sample(StandardNormal);
                            let s = comp.mean[ci] + comp.var[ci].sqrt() * z;
                            v.push(norm.denormalize(f, s).clamp(norm.min, norm.max));
                        }
                    }
                }
            }
            cols
        })
        .collect();

    let mut columns: Vec<Column> = Vec::with_capacity(model.schema.len());
    for (j, spec) in model.schema.iter().enumerate() {
        columns.push(match spec.kind {
            ColumnKind::Continuous => Column::Continuous(
                chunks.iter().flat_map(|c| c[j].as_continuous().expect("continuous").iter().copied()).collect(),
            ),
            ColumnKind::Categorical => Column::Categorical(
                chunks.iter().flat_map(|c| c[j].as_categorical().expect("categorical").iter().copied()).collect(),
            ),
        });
    }
    FeatureTable::new(model.schema.clone(), columns)
}
