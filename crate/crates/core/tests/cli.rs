use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TOY: &str = "\
1 1:0 2:0
1 1:0.4 2:0.1
1 1:0.1 2:0.5
1 1:0.3 2:0.3
1 1:0.2 2:0.2
2 1:4 2:4
2 1:4.5 2:4.2
2 1:4.2 2:3.8
2 1:3.9 2:4.4
2 1:4.1 2:4.1
";

fn kg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kernelgamma"))
        .args(args)
        .env_remove("KERNELGAMMA_THREADS")
        .output()
        .expect("failed to spawn CLI")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = kg(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn toy_file(dir: &Path) -> PathBuf {
    let p = dir.join("toy.libsvm");
    std::fs::write(&p, TOY).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn estimate_gamma_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let est: Value =
        serde_json::from_str(&ok(&["estimate-gamma", "--input", s(&data), "--gamma-variant", "min"])).unwrap();
    let geom: Value = serde_json::from_str(&ok(&["geometry", "--input", s(&data)])).unwrap();
    let d_max = geom["d_max"].as_f64().unwrap();
    let d_min = geom["d_min"].as_f64().unwrap();
    let gamma = est["gamma"].as_f64().unwrap();
    assert!((gamma - 1.0 / (d_max * d_min)).abs() <= 1e-12 * gamma);
    assert_eq!(est["d_used"].as_f64().unwrap(), d_min);

    // Unscaled, the diameters grow with the raw feature range.
    let raw: Value = serde_json::from_str(&ok(&["geometry", "--input", s(&data), "--scale-range", "none"])).unwrap();
    assert!(raw["d_min"].as_f64().unwrap() > d_min);

    let out = dir.path().join("est.json");
    assert_eq!(ok(&["estimate-gamma", "--input", s(&data), "--out", s(&out)]), "");
    let from_file: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(from_file["variant"], "avg");
}

#[test]
fn train_then_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    for (method, extra) in [("kos", vec![]), ("svm", vec!["--C", "10"])] {
        let model = dir.path().join(format!("{method}.json"));
        let mut args = vec!["train", "--input", s(&data), "--method", method, "--out", s(&model)];
        args.extend(extra);
        ok(&args);
        let o = kg(&["predict", "--model", s(&model), "--input", s(&data)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let labels: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
        let expected: Vec<&str> = TOY.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(labels, expected);
        assert!(stderr(&o).contains("accuracy 1.0000 on 10 samples"), "{}", stderr(&o));
    }

    let model = dir.path().join("fixed.json");
    ok(&[
        "train",
        "--input",
        s(&data),
        "--method",
        "kos",
        "--gamma",
        "0.5",
        "--out",
        s(&model),
    ]);
    let saved = std::fs::read_to_string(&model).unwrap();
    assert!(saved.contains("0.5"));
}

#[test]
fn tune_reports_a_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let res: Value = serde_json::from_str(&ok(&[
        "tune",
        "--input",
        s(&data),
        "--method",
        "svm",
        "--gamma-grid",
        "2^-1,2^1",
        "--c-grid",
        "1,10",
        "--folds",
        "2",
    ]))
    .unwrap();
    assert!([0.5, 2.0].contains(&res["gamma"].as_f64().unwrap()));
    assert_eq!(res["cv_score"].as_f64().unwrap(), 1.0);

    let res: Value = serde_json::from_str(&ok(&[
        "tune",
        "--input",
        s(&data),
        "--method",
        "kos",
        "--mode",
        "dmm",
        "--folds",
        "2",
    ]))
    .unwrap();
    let est: Value = serde_json::from_str(&ok(&["estimate-gamma", "--input", s(&data)])).unwrap();
    assert_eq!(res["gamma"], est["gamma"]);
}

#[test]
fn bench_emits_each_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let common = [
        "bench",
        "--input",
        s(&data),
        "--method",
        "kos,svm",
        "--mode",
        "dmm",
        "--seed",
        "0,1",
        "--c-grid",
        "1,10",
        "--folds",
        "2",
        "--test-fraction",
        "0.4",
    ];
    let md = ok(&common);
    assert!(md.contains("| toy | 2 | KOS |"), "{md}");

    let mut args = common.to_vec();
    args.extend(["--report-format", "csv"]);
    let csv = ok(&args);
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("dataset,classes,method,mode,seed"));

    let out = dir.path().join("report.json");
    let mut args = common.to_vec();
    args.extend(["--out", s(&out)]);
    ok(&args);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 4);

    let cfg = dir.path().join("bench.json");
    std::fs::write(
        &cfg,
        r#"{"datasets": [{"name": "cfg", "source": "file", "path": "toy.libsvm"}],
            "methods": ["kos"], "modes": ["dmm"], "test_fraction": 0.4}"#,
    )
    .unwrap();
    assert!(ok(&["bench", "--config", s(&cfg)]).contains("| cfg | 2 | KOS |"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());

    assert_eq!(kg(&["--help"]).status.code(), Some(0));
    assert_eq!(kg(&["--version"]).status.code(), Some(0));

    // Usage errors.
    assert_eq!(kg(&[]).status.code(), Some(1));
    assert_eq!(kg(&["frobnicate"]).status.code(), Some(1));
    let o = kg(&["train", "--input", s(&data), "--method", "svm", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--C"));
    assert_eq!(
        kg(&["geometry", "--input", s(&data), "--scale-range", "2,1"])
            .status
            .code(),
        Some(1)
    );

    // Data errors.
    let o = kg(&["geometry", "--input", "/nonexistent/x.libsvm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/x.libsvm"));
    let bad = dir.path().join("bad.libsvm");
    std::fs::write(&bad, "1 1:0\n1 1:x\n").unwrap();
    let o = kg(&["geometry", "--input", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    // Numerical: two identical points in different classes have zero diameter and distance.
    let degenerate = dir.path().join("same.libsvm");
    std::fs::write(&degenerate, "1 1:1\n-1 1:1\n").unwrap();
    let o = kg(&["estimate-gamma", "--input", s(&degenerate), "--scale-range", "none"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: "));
}

#[test]
fn thread_count_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy_file(dir.path());
    let o = Command::new(env!("CARGO_BIN_EXE_kernelgamma"))
        .args(["geometry", "--input", s(&data)])
        .env("KERNELGAMMA_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_kernelgamma"))
        .args(["geometry", "--input", s(&data)])
        .env("KERNELGAMMA_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}
