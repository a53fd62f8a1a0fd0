use std::path::Path;
use std::process::{Command, Output};

fn graphsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphsynth"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("GRAPHSYNTH_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = graphsynth(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path, rows: usize) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&["toy", "--rows", &rows.to_string(), "--out", s(&data)]);
    data.join("config.json")
}

#[test]
fn fit_generate_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 3000);
    let (bundle, synth, eval) = (dir.path().join("bundle"), dir.path().join("synth"), dir.path().join("eval"));
    ok(&["fit", "--config", s(&cfg), "--out", s(&bundle)]);
    for f in ["manifest.json", "structure.json", "features.json", "aligner.json", "summary.json", "timings.json"] {
        assert!(bundle.join(f).is_file(), "missing {f}");
    }
    ok(&["generate", "--bundle", s(&bundle), "--scale", "4", "--seed", "9", "--out", s(&synth)]);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(synth.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(manifest["seed"], 9);
    assert!(manifest["edge_types"][0]["density"].as_f64().unwrap() > 0.0);
    let edges = std::fs::read_to_string(synth.join("edges_txn.csv")).unwrap();
    assert!(edges.starts_with("src,dst,"), "{}", &edges[..40]);

    let printed = ok(&["evaluate", "--real", s(&bundle), "--synthetic", s(&synth), "--out", s(&eval)]);
    assert!(printed.contains("degree_dist_score"));
    assert!(std::fs::read_dir(&eval).unwrap().count() > 0);
}

#[test]
fn evaluating_real_against_itself_prints_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1000);
    let real = dir.path().join("real");
    ok(&["ingest", "--config", s(&cfg), "--out", s(&real)]);
    let printed = ok(&["evaluate", "--real", s(&real), "--synthetic", s(&real), "--out", s(&dir.path().join("eval"))]);
    assert!(printed.contains("degree_dist_score 1.000000"), "{printed}");
    assert!(printed.contains("feature_corr_score 1.000000"), "{printed}");
    assert!(printed.contains("degree_feature_js 0.000000"), "{printed}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 2000);
    let mut files = Vec::new();
    for k in 0..2 {
        let bundle = dir.path().join(format!("bundle{k}"));
        let synth = dir.path().join(format!("synth{k}"));
        ok(&["--workers", "2", "fit", "--config", s(&cfg), "--seed", "5", "--out", s(&bundle)]);
        ok(&["--workers", "2", "generate", "--bundle", s(&bundle), "--out", s(&synth)]);
        files.push([
            std::fs::read(bundle.join("structure.json")).unwrap(),
            std::fs::read(synth.join("edges_txn.csv")).unwrap(),
            std::fs::read(synth.join("nodes_user.csv")).unwrap(),
            std::fs::read(synth.join("manifest.json")).unwrap(),
        ]);
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn baseline_writes_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1000);
    let out = dir.path().join("er");
    ok(&["baseline", "--config", s(&cfg), "--kind", "er", "--out", s(&out)]);
    assert!(out.join("edges_txn.csv").is_file());
    assert!(out.join("nodes_merchant.csv").is_file());
}

#[test]
fn missing_column_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 100);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("\"user_id\"", "\"uid\"");
    std::fs::write(&cfg, text).unwrap();
    let out = graphsynth(&["fit", "--config", s(&cfg), "--out", s(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ingest") && err.contains("uid"), "{err}");
    assert!(!dir.path().join("b").exists());
}

#[test]
fn bad_settings_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 100);
    let out_dir = dir.path().join("b");
    let out = graphsynth(&["fit", "--config", s(&cfg), "--noise", "1.5", "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let out = graphsynth(&["--workers", "0", "fit", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_graphsynth"))
        .args(["fit", "--config", s(&cfg), "--out", s(&out_dir)])
        .env("GRAPHSYNTH_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_bundle_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphsynth(&["generate", "--bundle", s(&dir.path().join("nope")), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_scaling_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path(), 1000);
    let bundle = dir.path().join("bundle");
    ok(&["fit", "--config", s(&cfg), "--out", s(&bundle)]);
    let csv = dir.path().join("scaling.csv");
    ok(&["bench-scaling", "--bundle", s(&bundle), "--scales", "1,2,4", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("scale,nodes,edges,"));
    // scratch space is cleaned up
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
}
