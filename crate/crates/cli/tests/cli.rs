use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ledgercluster"));
    c.env_remove("LEDGERCLUSTER_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, name: &str) {
    let o = run(
        dir,
        &["synth", "--degrees", "1,2,3", "--per-degree", "8", "--length", "20", "--seed", "3", "--out", name],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

const QUICK: [&str; 6] = ["--pre-iters", "20", "--cls-iters", "20", "--precision", "f32"];

#[test]
fn synth_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..3], ["id", "label", "t0"]);
    assert_eq!(header.len(), 2 + 20);
    assert_eq!(lines.count(), 24);

    let m = json(dir.path().join("d.csv.manifest.json"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seeds"], serde_json::json!([3]));
    assert_eq!(m["config"]["per_degree"], 8);
    let out = &m["outputs"][0];
    assert_eq!(out["path"], "d.csv");
    let digest = format!("{:x}", Sha256::digest(text.as_bytes()));
    assert_eq!(out["sha256"], digest.as_str());
    assert!(m["started_at"].as_str().unwrap() <= m["finished_at"].as_str().unwrap());
}

/// Ten accounts over twelve months; account `a` gets a credit of `100 a` and a
/// debit of `a` in every month, plus one extra credit of 5 in March.
fn fixture() -> String {
    let mut s = String::from("account_id,date,type,amount\n");
    for a in 1..=10 {
        for m in 1..=12 {
            s += &format!("{a},1995-{m:02}-03,credit,{}.00\n", 100 * a);
            s += &format!("{a},1995-{m:02}-20,DEBIT,{}.00\n", a);
        }
        s += &format!("{a},1995-03-28,Credit,5.00\n");
    }
    s
}

#[test]
fn ingest_builds_one_series_per_account() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tx.csv"), fixture()).unwrap();
    let o = run(dir.path(), &["ingest", "--input", "tx.csv", "--months", "12", "--raw", "--out", "ds.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("ds.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let a: f64 = r[0].parse().unwrap();
        let vals: Vec<f64> = r[1..].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 12);
        for (m, v) in vals.iter().enumerate() {
            let expect = 99.0 * a + if m == 2 { 5.0 } else { 0.0 };
            assert_eq!(*v, expect, "account {a} month {m}");
        }
    }
    let m = json(dir.path().join("ds.csv.manifest.json"));
    assert_eq!(m["inputs"][0]["path"], "tx.csv");
}

#[test]
fn ingest_reports_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tx.csv"), "account_id,date,kind,amount\n1,1995-01-01,credit,1\n").unwrap();
    let o = run(dir.path(), &["ingest", "--input", "tx.csv", "--months", "12", "--out", "ds.csv"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("type"), "{}", stderr(&o));
    assert!(!dir.path().join("ds.csv").exists());
}

#[test]
fn train_fthc_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let mut args = vec!["train", "--fthc", "--data", "d.csv", "--k", "3", "--out", "run"];
    args.extend(QUICK);
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(dir.path().join("run/metrics.json"));
    assert_eq!(m["combo"], "cnn/none/lr/de");
    for key in ["sc", "dbi", "verdict"] {
        assert!(m.get(key).is_some(), "{key}");
    }
    for f in ["checkpoint.bin", "assignment.csv", "pretrain_loss.csv", "cluster_loss.csv", "manifest.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let manifest = json(dir.path().join("run/manifest.json"));
    assert_eq!(manifest["args"]["fthc"], true);
    assert_eq!(manifest["config"]["cls_iters"], 20);
}

#[test]
fn incompatible_combination_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let o = run(dir.path(), &["train", "--combo", "fcnn/umap/lr/dc", "--data", "d.csv", "--out", "run"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("dimensionality reduction must be none"), "{}", stderr(&o));
    let o = run(dir.path(), &["train", "--combo", "lstm/none/llr/none", "--data", "d.csv", "--out", "run"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("does not support"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["train", "--data", "x.csv", "--out", "o"])), 2);
    assert_eq!(code(&run(dir.path(), &["synth", "--out", "d.csv", "--length", "25"])), 3);
    assert_eq!(code(&run(dir.path(), &["--jobs", "0", "synth", "--out", "d.csv"])), 3);
    assert_eq!(code(&run(dir.path(), &["grid", "--data", "missing.csv", "--out", "g"])), 2);
}

fn grid_args<'a>(out: &'a str) -> Vec<&'a str> {
    let mut a = vec![
        "grid", "--data", "d.csv", "--k", "2,3", "--trials", "2", "--smoke", "--precision", "f32", "--combo",
        "fcnn/pca/lr/none", "--combo", "dtc/none/lr/dc", "--out", out,
    ];
    a.extend(["--batch-size", "8"]);
    a
}

#[test]
fn grid_rows_summary_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let o = run(dir.path(), &grid_args("g"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let report = fs::read_to_string(dir.path().join("g/report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    for combo in ["fcnn,pca,lr,none", "dtc,none,lr,dc"] {
        for k in [2, 3] {
            for t in 0..2 {
                let prefix = format!("{combo},{k},{t},{t},");
                assert_eq!(rows.iter().filter(|r| r.starts_with(&prefix)).count(), 1, "{prefix}");
            }
        }
    }

    let summary = json(dir.path().join("g/summary.json"));
    assert_eq!(summary["rows"], 8);
    assert_eq!(summary["includes_pretext_none"], true);
    if let Some(components) = summary["aggregates"]["components"].as_object() {
        let options = |class: &str| components[class].as_object().unwrap().len();
        assert_eq!(options("arch"), 4);
        assert_eq!(options("dimred"), 3);
        assert_eq!(options("pretext"), 4);
        assert_eq!(options("cluster_loss"), 3);
    }
    let manifest = json(dir.path().join("g/manifest.json"));
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));

    let o = run(dir.path(), &["replay", "--manifest", "g/manifest.json", "--out", "again"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.csv", "summary.json"] {
        assert_eq!(
            fs::read(dir.path().join("g").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }

    let o = bin()
        .current_dir(dir.path())
        .args(["--jobs", "1", "replay", "--manifest", "g/manifest.json", "--out", "serial"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("g/report.csv")).unwrap(),
        fs::read(dir.path().join("serial/report.csv")).unwrap()
    );
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let o = run(dir.path(), &["train", "--combo", "fcnn/pca/lr/none", "--data", "d.csv", "--out", "r", "--pre-iters", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    text.push('\n');
    fs::write(dir.path().join("d.csv"), text).unwrap();
    let o = run(dir.path(), &["replay", "--manifest", "r/manifest.json", "--out", "r2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("changed"), "{}", stderr(&o));
}

#[test]
fn seed_comes_from_the_environment_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .current_dir(dir.path())
        .env("LEDGERCLUSTER_SEED", "41")
        .args(["synth", "--per-degree", "2", "--length", "20", "--out", "d.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(dir.path().join("d.csv.manifest.json"));
    assert_eq!(m["args"]["seed"], 41);

    // the manifest carries the resolved seed, so replay ignores the environment
    let o = run(dir.path(), &["replay", "--manifest", "d.csv.manifest.json", "--out", "e.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("d.csv")).unwrap(),
        fs::read(dir.path().join("e.csv")).unwrap()
    );
}

fn bar_values(svg: &str) -> Vec<(String, f64, f64)> {
    let doc = roxmltree::Document::parse(svg).unwrap();
    doc.descendants()
        .filter(|n| n.attribute("class") == Some("bar"))
        .map(|n| {
            (
                n.attribute("data-label").unwrap().to_string(),
                n.attribute("data-value").unwrap().parse().unwrap(),
                n.attribute("height").unwrap().parse().unwrap(),
            )
        })
        .collect()
}

const HEADER: &str = "arch,dimred,pretext,cluster_loss,k,trial,seed,sc,dbi,verdict\n";

#[test]
fn report_charts_from_a_hand_report() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{HEADER}fcnn,pca,lr,none,3,0,0,0.5,1.0,valid\nfcnn,none,lr,de,3,0,0,0.25,2.0,valid\n\
         cnn,pca,llr,none,3,0,0,-0.125,0.5,valid\ncnn,none,lr,dc,3,0,0,,,degenerate_cluster\n"
    );
    fs::write(dir.path().join("r.csv"), body).unwrap();
    let o = run(dir.path(), &["report", "--report", "r.csv", "--out", "charts"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = |name: &str| fs::read_to_string(dir.path().join("charts").join(name)).unwrap();

    // fcnn: mean of 0.5 and 0.25; cnn: -0.125. The axis runs -0.125..0.375 over 280 px.
    let bars = bar_values(&svg("arch_sc.svg"));
    assert_eq!(bars.len(), 2);
    assert_eq!((bars[0].0.as_str(), bars[0].1), ("fcnn", 0.375));
    assert_eq!((bars[1].0.as_str(), bars[1].1), ("cnn", -0.125));
    assert!((bars[0].2 - 210.0).abs() < 0.01);
    assert!((bars[1].2 - 70.0).abs() < 0.01);

    let dbi = bar_values(&svg("arch_dbi.svg"));
    assert_eq!(dbi.iter().map(|b| b.1).collect::<Vec<_>>(), [1.5, 0.5]);

    for entry in fs::read_dir(dir.path().join("charts")).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "svg") {
            roxmltree::Document::parse(&fs::read_to_string(&p).unwrap()).unwrap();
        }
    }
}

#[test]
fn report_without_valid_rows_is_annotated() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.csv"), format!("{HEADER}fcnn,pca,lr,none,3,0,0,,,diverged\n")).unwrap();
    let o = run(dir.path(), &["report", "--report", "r.csv", "--out", "charts"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("charts/arch_sc.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let note = doc.descendants().find(|n| n.attribute("class") == Some("empty")).unwrap();
    assert_eq!(note.text(), Some("no valid runs"));
}

#[test]
fn malformed_report_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.csv"), format!("{HEADER}fcnn,pca,lr,none,three,0,0,,,valid\n")).unwrap();
    let o = run(dir.path(), &["report", "--report", "r.csv", "--out", "charts"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn report_plots_checkpoint_latents() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let o = run(dir.path(), &["train", "--combo", "fcnn/none/lr/none", "--data", "d.csv", "--out", "t", "--pre-iters", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    fs::write(dir.path().join("r.csv"), format!("{HEADER}fcnn,none,lr,none,3,0,0,0.1,1.0,valid\n")).unwrap();
    let o = run(dir.path(), &["report", "--report", "r.csv", "--out", "c", "--checkpoint", "t/checkpoint.bin"]);
    assert_eq!(code(&o), 3, "checkpoint without data");
    let o = run(
        dir.path(),
        &["report", "--report", "r.csv", "--out", "c", "--checkpoint", "t/checkpoint.bin", "--data", "d.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("c/latent_0_checkpoint.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("point")).count(), 24);
}

#[test]
fn stability_writes_rates_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "d.csv");
    let o = run(
        dir.path(),
        &[
            "stability", "--data", "d.csv", "--ratios", "1.0,0.1", "--seeds", "2", "--pre-iters", "10", "--cls-iters",
            "10", "--precision", "f32", "--out", "s",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rates = json(dir.path().join("s/rates.json"));
    let rates = rates.as_array().unwrap();
    assert_eq!(rates.len(), 2);
    for r in rates {
        assert_eq!(r["total"], 2);
        let rate = r["rate"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
    let csv = fs::read_to_string(dir.path().join("s/stability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    roxmltree::Document::parse(&fs::read_to_string(dir.path().join("s/stability.svg")).unwrap()).unwrap();
}
