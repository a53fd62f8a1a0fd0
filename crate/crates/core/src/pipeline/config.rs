use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aligner::AlignMode;
use crate::error::{Error, Result};
use crate::featgen::Backend;
use crate::graph::ConstructionSpec;
use crate::structgen::DEFAULT_NOISE_STRENGTH;
use crate::table::{ColumnKind, FeatureTable};

/// Environment variable that overrides the worker count.
pub const WORKERS_ENV: &str = "GRAPHSYNTH_WORKERS";

fn default_noise() -> f64 {
    DEFAULT_NOISE_STRENGTH
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input CSV; relative paths are resolved against the config file.
    pub input: PathBuf,
    pub graph: ConstructionSpec,
    /// Column kind overrides; other columns are inferred.
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnKind>,
    #[serde(default)]
    pub feature_backend: Backend,
    #[serde(default)]
    pub aligner: AlignMode,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        if cfg.input.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.input = dir.join(&cfg.input);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Kinds used when reading the input: overrides first, and node keys
    /// default to categorical so that ids such as `007` keep their spelling.
    pub fn column_kinds(&self) -> HashMap<String, ColumnKind> {
        let mut kinds: HashMap<String, ColumnKind> =
            self.graph.key_columns().into_iter().map(|c| (c, ColumnKind::Categorical)).collect();
        kinds.extend(self.columns.iter().map(|(k, v)| (k.clone(), *v)));
        kinds
    }

    pub fn read_input(&self) -> Result<FeatureTable> {
        let table = FeatureTable::read_csv(&self.input, &self.column_kinds())?;
        let available: Vec<String> = table.schema().iter().map(|c| c.name.clone()).collect();
        if let Some(c) = self.columns.keys().find(|c| !available.contains(c)) {
            return Err(Error::MissingColumn(c.clone()));
        }
        Ok(table)
    }
}

/// Worker count: the environment override, then the config, then all cores.
pub fn resolve_workers(configured: Option<usize>) -> Result<usize> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        };
    }
    Ok(configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}
