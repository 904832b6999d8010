use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poifair::eval::{read_table_csv, EvalReport};
use poifair::pipeline::read_sweep_csv;

fn poifair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poifair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(dir: &Path) -> PathBuf {
    let out = poifair(&["synth", "--out", dir.to_str().unwrap(), "--seed", "42"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.json")
}

fn run(goal: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        goal,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    poifair(&args)
}

/// Every file under `dir` except the manifest, keyed by relative path.
fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn fixture_run_writes_report_rows_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = tmp.path().join("run");
    let res = run("run", &config, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let reports: Vec<EvalReport> = serde_json::from_slice(&fs::read(out.join("table3.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 4);
    let rows = read_table_csv(fs::File::open(out.join("table3.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    // the CSV columns re-parse to the in-memory report values
    let expected: Vec<_> = reports.iter().flat_map(|r| r.table_rows()).collect();
    for (a, b) in rows.iter().zip(&expected) {
        assert_eq!((&a.model, &a.fusion, a.cutoff), (&b.model, &b.fusion, b.cutoff));
        for (x, y) in [
            (a.precision, b.precision),
            (a.recall, b.recall),
            (a.ndcg, b.ndcg),
            (a.ndcg_leisure, b.ndcg_leisure),
            (a.ndcg_working, b.ndcg_working),
            (a.delta_ndcg, b.delta_ndcg),
        ] {
            assert!((x - y).abs() <= 1e-9);
        }
    }
    let header = fs::read_to_string(out.join("table3.csv")).unwrap();
    assert!(header.starts_with("model,fusion,N,Pre,Rec,nDCG,nDCG_L,nDCG_W,dnDCG,pct_delta,acc_unf\n"));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["timings"].as_array().unwrap().len() >= 7);
    let histogram = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert_eq!(histogram.lines().count(), 25);
    assert!(histogram.starts_with("hour,count\n"));
}

#[test]
fn stage_by_stage_matches_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let full = tmp.path().join("full");
    assert!(run("run", &config, &full, &[]).status.success());
    let staged = tmp.path().join("staged");
    for goal in ["preprocess", "analyze", "recommend", "evaluate"] {
        let res = run(goal, &config, &staged, &[]);
        assert!(res.status.success(), "{goal}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(files(&full), files(&staged));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(run("run", &config, &a, &["--seed", "42"]).status.success());
    assert!(run("run", &config, &b, &["--seed", "42"]).status.success());
    assert!(run("run", &config, &c, &["--seed", "42", "--threads", "3"])
        .status
        .success());
    let table = |d: &Path| fs::read(d.join("table3.csv")).unwrap();
    assert_eq!(table(&a), table(&b));
    assert_eq!(table(&a), table(&c));
    assert_eq!(files(&a), files(&b));
}

#[test]
fn missing_poi_file_fails_in_parse_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    fs::remove_file(tmp.path().join("pois.tsv")).unwrap();
    let out = tmp.path().join("out");
    let res = run("run", &config, &out, &[]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("parse"), "{err}");
    assert!(err.contains("pois.tsv"), "{err}");
    assert!(out.join("manifest.json.partial").exists());
    assert!(!out.join("table3.csv").exists());
}

#[test]
fn later_failures_keep_partial_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let mut cfg: serde_json::Value = serde_json::from_slice(&fs::read(&config).unwrap()).unwrap();
    // thresholds no user can meet empty the dataset during preprocessing
    cfg["min_user_checkins"] = serde_json::json!(100_000);
    let bad = tmp.path().join("exhausted.json");
    fs::write(&bad, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("out");
    let res = run("run", &bad, &out, &[]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("exhausted"));
    assert!(out.join("load_report.json.partial").exists());
    assert!(!out.join("load_report.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"group_quantile\": 0.9}").unwrap();
    let res = run("run", &bad, &tmp.path().join("o"), &[]);
    assert_eq!(res.status.code(), Some(2));
    fs::write(&bad, "{not json").unwrap();
    let res = run("run", &bad, &tmp.path().join("o"), &[]);
    assert_eq!(res.status.code(), Some(2));
    let res = run("run", &tmp.path().join("absent.json"), &tmp.path().join("o"), &[]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn sweep_writes_grid_table_and_weighted_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = tmp.path().join("sweep");
    let res = run("sweep", &config, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_sweep_csv(fs::File::open(out.join("sweep.csv")).unwrap()).unwrap();
    for model in ["GeoSoCa", "LORE"] {
        assert_eq!(rows.iter().filter(|r| r.model == model).count(), 66);
    }
    let header = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(header.starts_with("model,lambda1,lambda2,lambda3,nDCG,nDCG_L,nDCG_W,dnDCG,acc_unf\n"));
    let table = read_table_csv(fs::File::open(out.join("table3.csv")).unwrap()).unwrap();
    assert_eq!(table.len(), 12);
    assert_eq!(
        table.iter().filter(|r| r.fusion.starts_with("weighted_sum(")).count(),
        4
    );
}
