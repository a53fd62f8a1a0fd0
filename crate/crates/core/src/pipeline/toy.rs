//! A small synthetic transaction table for demos and tests. Users and
//! merchants have power-law activity, and several features depend on how
//! active the endpoints are.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use super::config::PipelineConfig;
use crate::aligner::AlignMode;
use crate::error::{Error, Result};
use crate::featgen::Backend;
use crate::graph::{ConstructionSpec, EdgeCondition, EdgeSpec, PartiteSpec};
use crate::rng::{self, domain};
use crate::structgen::DEFAULT_NOISE_STRENGTH;
use crate::table::ColumnKind;

pub const HEADER: [&str; 8] = ["user_id", "merchant_id", "amount", "hour", "channel", "is_fraud", "user_age", "merchant_type"];
const MERCHANT_TYPES: [&str; 5] = ["grocery", "fuel", "restaurant", "travel", "online_retail"];

/// `rows` transactions; duplicate (user, merchant) pairs are possible, so
/// the graph built from them has at most `rows` edges.
pub fn toy_records(rows: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if rows == 0 {
        return Err(Error::Config("the toy table needs at least one row".into()));
    }
    let mut r = rng::stream(seed, domain::TOY, 0);
    let n_users = (rows / 5).max(10);
    let n_merchants = (rows / 40).max(5);
    let user_pick = Zipf::new(n_users as f64, 0.9).expect("valid zipf");
    let merchant_pick = Zipf::new(n_merchants as f64, 1.1).expect("valid zipf");

    // ids are shuffled so that they carry no rank information
    let mut user_ids: Vec<usize> = (0..n_users).collect();
    user_ids.shuffle(&mut r);
    let mut merchant_ids: Vec<usize> = (0..n_merchants).collect();
    merchant_ids.shuffle(&mut r);

    let user_activity: Vec<f64> = (1..=n_users).map(|k| (n_users as f64 / k as f64).ln()).collect();
    let merchant_activity: Vec<f64> = (1..=n_merchants).map(|k| (n_merchants as f64 / k as f64).ln()).collect();
    let user_age: Vec<f64> = user_activity.iter().map(|a| (22.0 + 3.0 * a + 12.0 * r.random::<f64>()).round()).collect();
    let merchant_type: Vec<&str> = merchant_activity
        .iter()
        .map(|&a| {
            if a > 3.0 && r.random::<f64>() < 0.6 {
                "online_retail"
            } else {
                MERCHANT_TYPES[r.random_range(0..MERCHANT_TYPES.len())]
            }
        })
        .collect();

    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let u = user_pick.sample(&mut r) as usize - 1;
        let m = merchant_pick.sample(&mut r) as usize - 1;
        let (au, am) = (user_activity[u], merchant_activity[m]);
        let z: f64 = r.sample(StandardNormal);
        let amount = ((2.0 + 0.3 * au + 0.1 * am + 0.6 * z).exp() * 100.0).round() / 100.0;
        let zh: f64 = r.sample(StandardNormal);
        let hour = (13.0 + 0.4 * au + 4.0 * zh).round().clamp(0.0, 23.0);
        let p_online = if merchant_type[m] == "online_retail" { 0.9 } else { 0.15 };
        let channel = if r.random::<f64>() < p_online { "online" } else { "in_store" };
        let p_fraud = 0.01 + if amount > 150.0 { 0.08 } else { 0.0 } + if channel == "online" { 0.03 } else { 0.0 };
        let fraud = if r.random::<f64>() < p_fraud { "yes" } else { "no" };
        out.push(vec![
            format!("U{:06}", user_ids[u]),
            format!("M{:05}", merchant_ids[m]),
            format!("{amount:.2}"),
            format!("{hour}"),
            channel.to_string(),
            fraud.to_string(),
            format!("{}", user_age[u]),
            merchant_type[m].to_string(),
        ]);
    }
    Ok(out)
}

/// Config for the toy table stored at `input`.
pub fn toy_config(input: impl Into<PathBuf>, seed: u64) -> PipelineConfig {
    let mut node_features = BTreeMap::new();
    node_features.insert("user".to_string(), vec!["user_age".to_string()]);
    node_features.insert("merchant".to_string(), vec!["merchant_type".to_string()]);
    PipelineConfig {
        input: input.into(),
        graph: ConstructionSpec {
            partites: vec![
                PartiteSpec { name: "user".into(), columns: vec!["user_id".into()] },
                PartiteSpec { name: "merchant".into(), columns: vec!["merchant_id".into()] },
            ],
            edges: vec![EdgeSpec {
                name: "txn".into(),
                src: "user".into(),
                dst: "merchant".into(),
                condition: EdgeCondition::SameRow,
                src_columns: None,
                dst_columns: None,
            }],
            node_features,
        },
        columns: [("hour".to_string(), ColumnKind::Continuous)].into_iter().collect(),
        feature_backend: Backend::Mixture,
        aligner: AlignMode::Ranked,
        noise: DEFAULT_NOISE_STRENGTH,
        scale: 1.0,
        seed,
        workers: None,
    }
}

/// Writes `transactions.csv` and `config.json` into `dir` and returns the
/// config path.
pub fn write_toy(dir: &Path, rows: usize, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("transactions.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
    w.write_record(HEADER)?;
    for rec in toy_records(rows, seed)? {
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let cfg_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&toy_config("transactions.csv", seed))?;
    text.push('\n');
    std::fs::write(&cfg_path, text).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(cfg_path)
}
