//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero when any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use common::{chi_square_p, kron_graph, kron_power, noiseless};
use graphsynth::aligner::{assign, fit_aligner, AlignMode, BoostConfig};
use graphsynth::graph::{Direction, DegreeDistribution, PartiteGraph};
use graphsynth::metrics::{dcc, js_divergence};
use graphsynth::pipeline::{self, toy, GenerateOptions, ModelBundle, PipelineConfig, Timings, TIMINGS};
use graphsynth::rng;
use graphsynth::structgen::{
    apply_noise, expected_in_degree_counts, expected_out_degree_counts, fit_structure, mle_quadrant_ratios, noise_bound,
    noise_matrix, plan_shape, sample_edges, sample_noise, KroneckerSampler, NoiseConfig, SeedMatrix, SeedModel,
};
use graphsynth::table::{Column, ColumnSpec, FeatureTable};
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn skewed() -> SeedMatrix {
    SeedMatrix::new(0.57, 0.19, 0.19, 0.05).unwrap()
}

fn c1_sampler_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 1.0f64;
    for (s_idx, s) in [SeedMatrix::uniform(), skewed()].into_iter().enumerate() {
        for n in [2u32, 3] {
            let side = 1u64 << n;
            let sampler = KroneckerSampler::new(&noiseless(s, side, side, 1));
            let mut r = rng::stream(100 + s_idx as u64, 0, n as u64);
            let mut counts = vec![0u64; (side * side) as usize];
            for _ in 0..1_000_000 {
                let (u, v) = sampler.draw_cell(&mut r);
                counts[(u * side + v) as usize] += 1;
            }
            let p = chi_square_p(&counts, &kron_power(s.entries(), n));
            worst = worst.min(p);
            ensure!(p > 0.01, "seed {:?}, n = {n}: chi-square p = {p:.4}", s.entries());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1}s");
    Ok(format!("smallest p-value {worst:.3} in {secs:.1}s"))
}

fn c2_closed_form_degrees() -> Outcome {
    let start = Instant::now();
    let levels = 8u32;
    let side = 1u64 << levels;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for p in [0.5, 0.75] {
        for q in [0.5, 0.75] {
            let s = SeedMatrix::new(p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)).unwrap();
            let mut bins_here = 0;
            for edges in [100u64, 1000, 10_000] {
                let sampler = KroneckerSampler::new(&noiseless(s, side, side, 1));
                let kmax = edges as usize;
                let mut mc_out = vec![0.0; kmax + 1];
                let mut mc_in = vec![0.0; kmax + 1];
                let reps = 1000;
                let mut r = rng::stream(200, edges, (p * 100.0 + q) as u64);
                let mut out = vec![0usize; side as usize];
                let mut inn = vec![0usize; side as usize];
                for _ in 0..reps {
                    out.iter_mut().for_each(|x| *x = 0);
                    inn.iter_mut().for_each(|x| *x = 0);
                    // draws with replacement, as the closed form assumes
                    for _ in 0..edges {
                        let (u, v) = sampler.draw_cell(&mut r);
                        out[u as usize] += 1;
                        inn[v as usize] += 1;
                    }
                    out.iter().for_each(|&d| mc_out[d] += 1.0 / reps as f64);
                    inn.iter().for_each(|&d| mc_in[d] += 1.0 / reps as f64);
                }
                let pred_out = expected_out_degree_counts(p, levels, edges, kmax);
                let pred_in = expected_in_degree_counts(q, levels, edges, kmax);
                for (pred, mc) in [(&pred_out, &mc_out), (&pred_in, &mc_in)] {
                    for k in 0..=kmax {
                        if pred[k] >= 30.0 {
                            let rel = (pred[k] - mc[k]).abs() / mc[k];
                            worst = worst.max(rel);
                            bins_here += 1;
                            ensure!(rel <= 0.05, "p={p} q={q} E={edges} k={k}: predicted {:.2}, simulated {:.2}", pred[k], mc[k]);
                        }
                    }
                }
            }
            ensure!(bins_here > 0, "p={p} q={q}: no bin with expected count >= 30");
            checked += bins_here;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s");
    Ok(format!("{checked} bins, largest relative error {:.2}% in {secs:.1}s", worst * 100.0))
}

fn c3_planted_recovery() -> Outcome {
    let start = Instant::now();
    let side = 1u64 << 14;
    let g = kron_graph(skewed(), side, side, 100_000, 300);
    let (model, fit) = fit_structure(&g, 0, 0.0, 1).map_err(|e| e.to_string())?;
    ensure!((fit.p - 0.76).abs() <= 0.02, "p = {:.4}", fit.p);
    ensure!((fit.q - 0.76).abs() <= 0.02, "q = {:.4}", fit.q);
    // ratios on the generated ids; the fit pipeline's degree-rank relabelling is reported alongside
    let (ab, ac) = mle_quadrant_ratios(&g.edge_type(0).edges, &plan_shape(side, side).unwrap()).map_err(|e| e.to_string())?;
    ensure!((ab - 3.0).abs() <= 0.3, "a/b = {ab:.3}");
    ensure!((ac - 3.0).abs() <= 0.3, "a/c = {ac:.3}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "p {:.4}, q {:.4}, a/b {ab:.3}, a/c {ac:.3} (after degree relabelling {:.3}, {:.3}) in {secs:.1}s",
        fit.p, fit.q, model.ratios.0, model.ratios.1
    ))
}

fn c4_noise() -> Outcome {
    let s = skewed();
    let side = 1u64 << 10;
    let zero = NoiseConfig::draw(&s, 0.0, 10, 7).map_err(|e| e.to_string())?;
    for level in 0..10 {
        ensure!(zero.level_seed(&s, level) == s, "level {level} changed at zero strength");
    }
    let plain = SeedModel::new(s, side, side, 20_000, NoiseConfig::none(), (3.0, 3.0)).unwrap();
    let with_zero = SeedModel::new(s, side, side, 20_000, zero, (3.0, 3.0)).unwrap();
    ensure!(
        sample_edges(&plain, 20_000, 9).unwrap() == sample_edges(&with_zero, 20_000, 9).unwrap(),
        "zero-strength cascade samples differ from the noiseless one"
    );

    let mut runner = TestRunner::new(RunnerConfig { cases: 10_000, failure_persistence: None, ..RunnerConfig::default() });
    let strategy = (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0, 0.0f64..=1.0, proptest::num::u64::ANY, 0.0f64..1.0);
    runner
        .run(&strategy, |(a, b, c, d, eps, seed, u)| {
            let t = a + b + c + d;
            let s = SeedMatrix::new(a / t, b / t, c / t, d / t).unwrap();
            let nf = u * noise_bound(&s, eps);
            let delta = noise_matrix(&s, nf);
            proptest::prop_assert!(delta.iter().sum::<f64>().abs() < 1e-12, "noise sums to {}", delta.iter().sum::<f64>());
            for m in [apply_noise(&s, nf), sample_noise(&s, eps, &mut rng::stream(seed, 0, 0)).unwrap()] {
                proptest::prop_assert!(m.entries().iter().all(|&x| x >= 0.0), "{:?}", m.entries());
                proptest::prop_assert!((m.entries().iter().sum::<f64>() - 1.0).abs() < 1e-12);
                proptest::prop_assert!(m.validate().is_ok());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("zero strength is exact; 10000 perturbed seeds valid and zero-sum".into())
}

struct ToyRun {
    _dir: tempfile::TempDir,
    real: PartiteGraph,
    bundle: ModelBundle,
    fit_seconds: f64,
}

fn toy_run(rows: usize) -> ToyRun {
    let dir = tempfile::tempdir().unwrap();
    let path = toy::write_toy(dir.path(), rows, 0).unwrap();
    let config = PipelineConfig::load(&path).unwrap();
    let real = pipeline::ingest(&config).unwrap();
    let start = Instant::now();
    let (bundle, _) = pipeline::fit_graph(&real, &config, Timings::default()).unwrap();
    ToyRun { _dir: dir, real, bundle, fit_seconds: start.elapsed().as_secs_f64() }
}

fn c5_density(t: &ToyRun) -> Outcome {
    let fit = &t.bundle.manifest.fit[0];
    let mut parts = Vec::new();
    for s in [1.0, 4.0, 64.0] {
        let opts = GenerateOptions { align: false, ..GenerateOptions::new(s, 5) };
        let (g, _) = pipeline::generate(&t.bundle, &opts).map_err(|e| e.to_string())?;
        let m = pipeline::manifest_for(&g, "generate", Some(5), Some(s));
        let rel = (m.edge_types[0].density - fit.density).abs() / fit.density;
        ensure!(rel < 0.01, "S={s}: density {} vs fitted {}", m.edge_types[0].density, fit.density);
        if s == 64.0 {
            ensure!(g.partites()[0].node_count == 8 * fit.nodes_src, "S=64 source nodes {}", g.partites()[0].node_count);
            ensure!(g.partites()[1].node_count == 8 * fit.nodes_dst, "S=64 target nodes {}", g.partites()[1].node_count);
            ensure!(m.edge_types[0].edges == 64 * fit.edges, "S=64 edges {}", m.edge_types[0].edges);
        }
        parts.push(format!("S={s}: {:.3}%", rel * 100.0));
    }
    Ok(parts.join(", "))
}

fn c6_identities(t: &ToyRun) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = pipeline::manifest_for(&t.real, "ingest", None, None);
    pipeline::write_dataset(&dir.path().join("real"), &t.real, &m, &Timings::default()).map_err(|e| e.to_string())?;
    let ev = pipeline::evaluate(&dir.path().join("real"), &dir.path().join("real")).map_err(|e| e.to_string())?;
    let r = &ev.report;
    ensure!(r.degree_dist_score == 1.0, "degree score {}", r.degree_dist_score);
    ensure!(r.feature_corr_score == 1.0, "feature-corr score {}", r.feature_corr_score);
    ensure!(r.degree_feature_js == 0.0, "degree-feature JS {}", r.degree_feature_js);

    let mut runner = TestRunner::new(RunnerConfig { cases: 100, failure_persistence: None, ..RunnerConfig::default() });
    let hist = proptest::collection::vec(0.0f64..1.0, 1..50);
    runner
        .run(&(hist.clone(), hist), |(p, q)| {
            let n = p.len().min(q.len());
            let (p, q) = (&p[..n], &q[..n]);
            proptest::prop_assert_eq!(js_divergence(p, q), js_divergence(q, p));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    runner
        .run(&proptest::collection::vec(0u64..1000, 1..500), |deg| {
            let d = DegreeDistribution::from_degrees(Direction::Out, &deg);
            proptest::prop_assert_eq!(dcc(&d, &d), 0.0);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("exact self-evaluation; symmetry and dcc(d, d) = 0 over 100 cases each".into())
}

fn c7_ordering(t: &ToyRun) -> Outcome {
    let start = Instant::now();
    let (ours, _) = pipeline::generate(&t.bundle, &GenerateOptions::new(1.0, 0)).map_err(|e| e.to_string())?;
    let (er, _) = pipeline::baseline_graph(&t.real, 0, Timings::default()).map_err(|e| e.to_string())?;
    let a = pipeline::evaluate_against(&t.bundle.summary, &ours).map_err(|e| e.to_string())?.report;
    let b = pipeline::evaluate_against(&t.bundle.summary, &er).map_err(|e| e.to_string())?.report;
    let secs = t.fit_seconds + start.elapsed().as_secs_f64();
    let detail = format!(
        "{} edges; degree {:.4} vs {:.4}, feature-corr {:.4} vs {:.4}, JS {:.4} vs {:.4} in {secs:.1}s",
        t.real.total_edges(),
        a.degree_dist_score,
        b.degree_dist_score,
        a.feature_corr_score,
        b.feature_corr_score,
        a.degree_feature_js,
        b.degree_feature_js
    );
    ensure!(a.degree_dist_score > b.degree_dist_score, "degree score not above baseline: {detail}");
    ensure!(a.feature_corr_score > b.feature_corr_score, "feature-corr score not above baseline: {detail}");
    ensure!(a.degree_feature_js < b.degree_feature_js, "JS not below baseline: {detail}");
    ensure!(secs < 600.0, "took {secs:.1}s");
    Ok(detail)
}

fn c8_ablation() -> Outcome {
    let side = 1u64 << 12;
    let mut g = kron_graph(skewed(), side, side, 40_000, 800);
    let (dout, din) = (g.out_degrees(0), g.in_degrees(0));
    let mut r = rng::stream(801, 0, 0);
    let x: Vec<f64> = g
        .edge_type(0)
        .edges
        .iter()
        .map(|&(u, v)| (dout[u as usize] as f64).ln() + (din[v as usize] as f64).ln() + 0.1 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let t = FeatureTable::new(vec![ColumnSpec::continuous("x")], vec![Column::Continuous(x)]).unwrap();
    g.set_edge_features(0, Some(t)).unwrap();

    let mut cfg = toy::toy_config("planted.csv", 0);
    cfg.graph.node_features.clear();
    let (bundle, _) = pipeline::fit_graph(&g, &cfg, Timings::default()).map_err(|e| e.to_string())?;
    ensure!(bundle.aligners[0].is_some(), "no aligner was trained");
    let js = |mode| -> Result<(f64, PartiteGraph), String> {
        let opts = GenerateOptions { mode: Some(mode), ..GenerateOptions::new(1.0, 3) };
        let (s, _) = pipeline::generate(&bundle, &opts).map_err(|e| e.to_string())?;
        let ev = pipeline::evaluate_against(&bundle.summary, &s).map_err(|e| e.to_string())?;
        Ok((ev.report.degree_feature_js, s))
    };
    let (ranked, gr) = js(AlignMode::Ranked)?;
    let (random, gq) = js(AlignMode::Random)?;
    ensure!(gr.edge_type(0).edges == gq.edge_type(0).edges, "structures differ between modes");
    let sorted = |g: &PartiteGraph| {
        let mut v = g.edge_type(0).features.as_ref().unwrap().column(0).as_continuous().unwrap().to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    ensure!(sorted(&gr) == sorted(&gq), "feature rows differ between modes");
    ensure!(ranked < random, "ranked JS {ranked:.4} not below random JS {random:.4}");
    Ok(format!("ranked {ranked:.4} vs random {random:.4}"))
}

/// Minimum squared-error assignment cost by dynamic programming over subsets.
fn optimal_cost(preds: &[f64], rows: &[f64]) -> f64 {
    let n = rows.len();
    let mut best = vec![f64::INFINITY; 1 << n];
    best[0] = 0.0;
    for mask in 0..(1usize << n) {
        let i = mask.count_ones() as usize;
        if i >= preds.len() || !best[mask].is_finite() {
            continue;
        }
        for j in 0..n {
            if mask & (1 << j) == 0 {
                let next = mask | (1 << j);
                best[next] = best[next].min(best[mask] + (preds[i] - rows[j]).powi(2));
            }
        }
    }
    best.iter().enumerate().filter(|(m, _)| m.count_ones() as usize == preds.len()).map(|(_, c)| *c).fold(f64::INFINITY, f64::min)
}

fn c9_brute_force() -> Outcome {
    let one_col = |v: Vec<f64>| FeatureTable::new(vec![ColumnSpec::continuous("x")], vec![Column::Continuous(v)]).unwrap();
    let inputs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64; 8]).collect();
    let model = fit_aligner(&inputs, &one_col((0..12).map(f64::from).collect()), BoostConfig::default(), 0).map_err(|e| e.to_string())?;
    let mut r = rng::stream(900, 0, 0);
    let instances = 500;
    for k in 0..instances {
        let e = 1 + k % 10;
        let preds: Vec<f64> = (0..e).map(|_| r.random_range(-50.0..50.0)).collect();
        let rows: Vec<f64> = (0..e).map(|_| r.random_range(-50.0..50.0)).collect();
        let p: Vec<Vec<f64>> = preds.iter().map(|&x| vec![x]).collect();
        let a = assign(&p, &one_col(rows.clone()), Some(&model), AlignMode::Ranked, k as u64).map_err(|e| e.to_string())?;
        let cost: f64 = a.iter().enumerate().map(|(i, &j)| (preds[i] - rows[j]).powi(2)).sum();
        let best = optimal_cost(&preds, &rows);
        ensure!((cost - best).abs() <= 1e-9 * (1.0 + best), "instance {k}: ranked {cost} vs optimal {best}");
    }
    Ok(format!("{instances} instances with 1 to 10 edges"))
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != TIMINGS)
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = toy::write_toy(dir.path(), 8000, 4).unwrap();
    let cfg = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let run = |k: usize| -> Result<(), String> {
        pool.install(|| {
            let (bundle, t) = pipeline::fit(&cfg)?;
            bundle.save(&dir.path().join(format!("bundle{k}")), Some(&t))?;
            let loaded = ModelBundle::load(&dir.path().join(format!("bundle{k}")))?;
            for (name, b) in [("orig", &bundle), ("loaded", &loaded)] {
                let opts = GenerateOptions::new(2.0, 17);
                let (g, t) = pipeline::generate(b, &opts)?;
                let m = pipeline::manifest_for(&g, "generate", Some(17), Some(2.0));
                pipeline::write_dataset(&dir.path().join(format!("gen{k}_{name}")), &g, &m, &t)?;
            }
            Ok(())
        })
        .map_err(|e: graphsynth::Error| e.to_string())
    };
    run(0)?;
    run(1)?;
    let d = |n: &str| dir_bytes(&dir.path().join(n));
    ensure!(d("bundle0") == d("bundle1"), "bundles differ between runs");
    ensure!(d("gen0_orig") == d("gen1_orig"), "generated data differs between runs");
    ensure!(d("gen0_orig") == d("gen0_loaded"), "reloaded bundle generates different data");
    Ok(format!("{} bundle files and {} dataset files byte-identical", d("bundle0").len(), d("gen0_orig").len()))
}

fn c11_throughput(t: &ToyRun) -> Outcome {
    let target = 10_000_000.0;
    let s = target / t.bundle.manifest.fit[0].edges as f64;
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let opts = GenerateOptions { align: false, ..GenerateOptions::new(s, 1) };
    let (g, timings) = pipeline::generate(&t.bundle, &opts).map_err(|e| e.to_string())?;
    let m = pipeline::manifest_for(&g, "generate", Some(1), Some(s));
    pipeline::write_dataset(&dir.path().join("big"), &g, &m, &timings).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let edges = g.total_edges();
    drop(g);
    ensure!(edges as f64 >= 0.99 * target, "only {edges} edges");
    ensure!(secs < 60.0, "{edges} edges took {secs:.1}s");

    let scales = [1.0, 4.0, 16.0, 64.0];
    let points = pipeline::bench_scaling(&t.bundle, &scales, 1, &dir.path().join("scratch")).map_err(|e| e.to_string())?;
    let csv = Path::new(env!("CARGO_TARGET_TMPDIR")).join("scaling.csv");
    pipeline::write_scaling_csv(&csv, &points).map_err(|e| e.to_string())?;
    let lines = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?.lines().count();
    ensure!(lines == scales.len() + 1, "scaling CSV has {lines} lines");
    Ok(format!(
        "{edges} edges generated and written in {secs:.1}s on {} threads; scaling curve at {}",
        rayon::current_num_threads(),
        csv.display()
    ))
}

fn report(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters from the default harness
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= report(1, "Kronecker sampler matches the materialized distribution", c1_sampler_oracle);
    ok &= report(2, "closed-form degree counts match simulation", c2_closed_form_degrees);
    ok &= report(3, "planted seed parameters are recovered", c3_planted_recovery);
    ok &= report(4, "noise is exact at zero strength and valid otherwise", c4_noise);
    let t = toy_run(60_000);
    ok &= report(5, "density is preserved under scaling", || c5_density(&t));
    ok &= report(6, "metric identities", || c6_identities(&t));
    ok &= report(7, "fitted model beats the Erdos-Renyi baseline", || c7_ordering(&t));
    ok &= report(8, "ranked alignment beats random alignment", c8_ablation);
    ok &= report(9, "rank matching is the optimal assignment", c9_brute_force);
    ok &= report(10, "outputs are deterministic and bundles round-trip", c10_determinism);
    ok &= report(11, "ten million edges within a minute", || c11_throughput(&t));
    if !ok {
        std::process::exit(1);
    }
}
