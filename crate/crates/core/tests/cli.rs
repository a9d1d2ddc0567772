mod common;

use std::path::{Path, PathBuf};

use common::{read_json, run, run_ok, s};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Small labeled blobs plus analysis-case complementary labels.
fn prepared(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    run_ok(&[
        "--seed",
        "1",
        "--out",
        s(dir),
        "gen",
        "--c",
        "10",
        "--n-per-class",
        "20",
        "--n-test-per-class",
        "5",
        "--d",
        "4",
    ]);
    let train = dir.join("train.csv");
    run_ok(&[
        "--seed",
        "2",
        "--out",
        s(dir),
        "annotate",
        "--input",
        s(&train),
        "--k",
        "4",
    ]);
    (train, dir.join("test.csv"), dir.join("train_cl.csv"))
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(
        run(&["gen", "--n-per-class", "0", "--out", s(out)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["gen", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));

    let bad = out.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"c": 3, "rows": [[0, 1, 0], [0.5, 0, 0.6], [1, 0, 0]]}"#,
    )
    .unwrap();
    let r = run(&["analyze", "--q-file", s(&bad)]);
    assert_eq!(r.status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(
        run(&["analyze", "--q-file", s(&bad)]).status.code(),
        Some(2)
    );

    let r = run(&["analyze", "--q-builder", "uniform", "--c", "2", "--fano"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("C >= 3"));

    let r = run(&[
        "--out",
        s(out),
        "compare",
        "--designs",
        "",
        "--losses",
        "fwd",
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn analyze_reports_fixture_entropy() {
    let r = run_ok(&["analyze", "--q-file", s(&fixture("q_ours.json"))]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!((v["h_cond_bits"].as_f64().unwrap() - 3.0529).abs() < 1e-3);
    let r = run_ok(&[
        "--format",
        "csv",
        "analyze",
        "--q-file",
        s(&fixture("q_bias.json")),
    ]);
    let text = String::from_utf8(r.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("h_cond_bits,i_yybar_bits,fano_bound,c"));
    assert!(lines.next().unwrap().starts_with("1.1974"));
}

#[test]
fn analyze_uniform_builder_gives_log2_c_minus_1() {
    let r = run_ok(&["analyze", "--q-builder", "uniform", "--c", "10"]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert!((v["h_cond_bits"].as_f64().unwrap() - 9f64.log2()).abs() < 1e-9);
    assert!(v["fano_bound"].as_f64().unwrap() > 0.68);
}

#[test]
fn simulate_entropy_prints_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&[
        "--seed",
        "1",
        "--out",
        s(dir.path()),
        "simulate-entropy",
        "--c",
        "10",
        "--k",
        "4",
        "--trials",
        "1000",
    ]);
    assert_eq!(String::from_utf8(r.stdout).unwrap().trim(), "1.000");

    let r = run_ok(&[
        "--out",
        s(dir.path()),
        "simulate-entropy",
        "--c",
        "10",
        "--k",
        "9",
        "--trials",
        "100",
    ]);
    assert_eq!(String::from_utf8(r.stdout).unwrap().trim(), "1.000");
    let mut rdr = csv::Reader::from_path(dir.path().join("entropy_pairs.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["trial", "h_dense", "h_sparse"]);
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (a, b): (f64, f64) = (rec[1].parse().unwrap(), rec[2].parse().unwrap());
        assert!((a - b).abs() <= 1e-9);
        n += 1;
    }
    assert_eq!(n, 100);
}

#[test]
fn annotate_writes_noise_free_report() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path());
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["noise_rate"].as_f64(), Some(0.0));
    assert_eq!(report["counts"].as_array().unwrap().len(), 10);
    let header = std::fs::read_to_string(dir.path().join("train_cl.csv")).unwrap();
    assert!(header.starts_with("f0,f1,f2,f3,y,ybar\n"));
}

#[test]
fn train_fwd_and_cpe_f_give_identical_curves() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, cl) = prepared(dir.path());
    let curves = |args: &[&str], name: &str| {
        let out = dir.path().join(name);
        let mut all = vec![
            "--seed",
            "7",
            "--out",
            s(&out),
            "train",
            "--train",
            s(&cl),
            "--test",
            s(&test),
            "--q-builder",
            "bicl",
            "--q-seed",
            "2",
            "--epochs",
            "6",
            "--hidden",
            "8",
        ];
        all.extend_from_slice(args);
        run_ok(&all);
        std::fs::read_to_string(out.join("curves.csv")).unwrap()
    };
    let fwd = curves(&["--loss", "fwd"], "fwd");
    let cpe = curves(&["--loss", "cpe", "--variant", "f"], "cpe");
    assert_eq!(fwd, cpe);
    assert_eq!(fwd.lines().count(), 7);
    assert!(fwd.starts_with("epoch,loss,test_acc\n"));
}

#[test]
fn train_ure_on_singular_q_fails_with_remedy() {
    let dir = tempfile::tempdir().unwrap();
    let (_, test, cl) = prepared(dir.path());
    let r = run(&[
        "--out",
        s(&dir.path().join("u")),
        "train",
        "--train",
        s(&cl),
        "--test",
        s(&test),
        "--loss",
        "ure",
        "--q-file",
        s(&fixture("q_ours.json")),
        "--epochs",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("singular"), "{err}");
    assert!(err.contains("FWD or CPE"), "{err}");
}

#[test]
fn train_seed_set_and_combined() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, cl) = prepared(dir.path());
    let out = dir.path().join("est");
    let r = run_ok(&[
        "--out",
        s(&out),
        "train",
        "--train",
        s(&cl),
        "--test",
        s(&test),
        "--seed-per-class",
        "5",
        "--epochs",
        "2",
        "--hidden",
        "4",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(v["q_source"], "seed-set:5-per-class");
    assert_eq!(v["train_loss"].as_array().unwrap().len(), 2);
    assert_eq!(
        v["final_eval"]["per_class_accuracy"]
            .as_array()
            .unwrap()
            .len(),
        10
    );
    assert!(out.join("q_used.json").exists());

    run_ok(&[
        "--out",
        s(&out),
        "train",
        "--train",
        s(&cl),
        "--test",
        s(&test),
        "--seed-per-class",
        "5",
        "--alpha",
        "0.5",
        "--epochs",
        "2",
        "--hidden",
        "4",
    ]);
    let r = run(&[
        "--out",
        s(&out),
        "train",
        "--train",
        s(&cl),
        "--test",
        s(&test),
        "--q-builder",
        "uniform",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(r.status.code(), Some(2));

    // Ordinary CE on the labeled file; FWD on it is refused.
    run_ok(&[
        "--out",
        s(&out),
        "train",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--loss",
        "ce",
        "--epochs",
        "2",
    ]);
    let r = run(&[
        "--out",
        s(&out),
        "train",
        "--train",
        s(&train),
        "--test",
        s(&test),
        "--q-builder",
        "uniform",
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn compare_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let design = format!("uniform,biased3,file:{}", s(&fixture("q_ours.json")));
    let r = run_ok(&[
        "--out",
        s(dir.path()),
        "compare",
        "--designs",
        &design,
        "--losses",
        "fwd,ure",
        "--seeds",
        "2",
        "--c",
        "10",
        "--n-per-class",
        "10",
        "--n-test-per-class",
        "3",
        "--d",
        "2",
        "--epochs",
        "2",
        "--hidden",
        "4",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let singular = row["design"].as_str().unwrap().starts_with("file:") && row["loss"] == "ure";
        if singular {
            assert_eq!(row["status"], "singular-transition");
            assert_eq!(row["n_ok"], 0);
            assert!(row["mean"].is_null() && row["delta"].is_null());
        } else {
            assert_eq!(row["status"], "ok", "{row}");
            assert!(row["std"].is_number());
        }
        if row["design"] == "uniform" {
            assert_eq!(row["delta"].as_f64(), Some(0.0));
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("design,loss,h_cond_bits,n_ok,n_failed,mean,std,delta,status\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn compare_three_designs_one_loss() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_ok(&[
        "--format",
        "csv",
        "--out",
        s(dir.path()),
        "compare",
        "--designs",
        "uniform,biased3,bicl",
        "--seeds",
        "3",
        "--c",
        "5",
        "--n-per-class",
        "10",
        "--n-test-per-class",
        "3",
        "--d",
        "2",
        "--epochs",
        "2",
        "--hidden",
        "4",
        "--k",
        "2",
    ]);
    let text = String::from_utf8(r.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    let delta_col = text
        .lines()
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == "delta")
        .unwrap();
    for line in text.lines().skip(1) {
        assert!(!line.split(',').nth(delta_col).unwrap().is_empty());
    }
}
