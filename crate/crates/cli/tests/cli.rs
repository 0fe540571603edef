use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dwml_core::train::train;
use dwml_core::{SyntheticSpec, TrainConfig};
use tempfile::TempDir;

fn dwml(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwml"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dwml(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = dwml(dir, args);
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn last_metrics(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn isotonic_table_has_tiny_differences() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "isotonic",
            "--seed",
            "1",
            "--set",
            "isotonic.instances=1000",
            "--out",
            "iso",
        ],
    );
    let (header, rows) = read_csv(&tmp.path().join("iso/isotonic.csv"));
    assert_eq!(header, ["seed", "margin_risk", "lp_risk", "diff"]);
    assert_eq!(rows.len(), 1000);
    let worst = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    assert_eq!(rows[0][0], "1");
    assert!(tmp.path().join("iso/config.resolved").exists());
}

#[test]
fn density_table_has_one_column_per_dimension() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["simulate", "density", "--set", "sim.dims=4,8,16,32,64,128"],
    );
    let (header, rows) = read_csv(&tmp.path().join("out/density.csv"));
    assert_eq!(header, ["d", "n4", "n8", "n16", "n32", "n64", "n128"]);
    assert_eq!(rows.len(), 201);
}

#[test]
fn small_simulations_write_their_tables() {
    let tmp = TempDir::new().unwrap();
    let fast = [
        "--set",
        "sim.replicates=200",
        "--set",
        "sim.draws=500",
        "--set",
        "sim.dim=16",
    ];
    for (which, file, columns) in [
        ("variance", "variance.csv", vec!["d", "statistic", "redrawn"]),
        (
            "sampler-hist",
            "sampler_hist.csv",
            vec!["strategy", "bin_lo", "bin_hi", "count", "mass"],
        ),
    ] {
        let mut args = vec!["simulate", which, "--out", which];
        args.extend(fast);
        ok(tmp.path(), &args);
        let (header, rows) = read_csv(&tmp.path().join(which).join(file));
        assert_eq!(header, columns);
        assert!(!rows.is_empty());
    }
    let (_, rows) = read_csv(&tmp.path().join("sampler-hist/sampler_hist.csv"));
    let strategies: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(strategies.len(), 4);
}

#[test]
fn pairwise_and_stability_runs() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["simulate", "pairwise-hist", "--set", "epochs=3", "--out", "p"],
    );
    let (_, rows) = read_csv(&tmp.path().join("p/pairwise_hist.csv"));
    for epoch in ["1", "2", "3"] {
        let mass: f64 = rows
            .iter()
            .filter(|r| r[0] == epoch)
            .map(|r| r[4].parse::<f64>().unwrap())
            .sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
    ok(
        tmp.path(),
        &[
            "simulate",
            "stability",
            "--set",
            "epochs=2",
            "--set",
            "sim.log_every=2",
            "--out",
            "s",
        ],
    );
    let (header, rows) = read_csv(&tmp.path().join("s/stability.csv"));
    assert_eq!(header, ["curve", "iteration", "threshold"]);
    let curves: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        curves.into_iter().collect::<Vec<_>>(),
        ["margin_m10", "margin_m2", "triplet_l2_m10", "triplet_l2_m2"]
    );
}

#[test]
fn train_matches_library_run_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["train", "--out", "a"]);
    ok(tmp.path(), &["train", "--out", "b"]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        fs::read(a.join("metrics.jsonl")).unwrap(),
        fs::read(b.join("metrics.jsonl")).unwrap()
    );

    let data = SyntheticSpec::default().generate().unwrap();
    let lib = train(&data, &TrainConfig::default()).unwrap();
    let expected = lib.log.last().unwrap().recall_at(1).unwrap();
    assert_eq!(
        last_metrics(&a.join("metrics.jsonl"))["recall"]["1"].as_f64().unwrap(),
        expected
    );
    let lines = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), TrainConfig::default().epochs);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "train",
            "--set",
            "epochs=4",
            "--set",
            "loss=triplet_l2",
            "--seed",
            "9",
            "--out",
            "first",
        ],
    );
    let resolved = tmp.path().join("first/config.resolved");
    ok(
        tmp.path(),
        &["train", "--config", resolved.to_str().unwrap(), "--out", "second"],
    );
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("first", "metrics.jsonl"), read("second", "metrics.jsonl"));
    // Only the `out` line differs.
    let diff: Vec<_> = String::from_utf8(read("first", "config.resolved"))
        .unwrap()
        .lines()
        .zip(String::from_utf8(read("second", "config.resolved")).unwrap().lines())
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.to_string())
        .collect();
    assert_eq!(diff, ["out = first"]);
}

#[test]
fn eval_reproduces_final_epoch() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["train", "--set", "epochs=3"]);
    ok(tmp.path(), &["eval", "--set", "epochs=3"]);
    let metrics = last_metrics(&tmp.path().join("out/metrics.jsonl"));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("out/eval.json")).unwrap()).unwrap();
    assert_eq!(eval["recall"], metrics["recall"]);
    assert_eq!(eval["nmi"], metrics["nmi"]);
    assert_eq!(eval["threshold"], metrics["threshold"]);
}

#[test]
fn csv_dataset_round_trip_through_training() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &[
            "dataset",
            "gen",
            "--set",
            "data.classes=5",
            "--set",
            "data.per_class=8",
            "--out",
            "data",
        ],
    );
    let path = tmp.path().join("data/dataset.csv");
    let (header, rows) = read_csv(&path);
    assert_eq!(header.len(), 21);
    assert_eq!(rows.len(), 40);
    let set = format!("data.path={}", path.display());
    ok(
        tmp.path(),
        &[
            "train",
            "--set",
            &set,
            "--set",
            "epochs=2",
            "--set",
            "batch_size=8",
            "--set",
            "per_class=4",
        ],
    );
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let (code, err) = exit_code(tmp.path(), &["train", "--set", "learning_rate=0.1"]);
    assert_eq!(code, 2);
    assert!(err.contains("unknown key"), "{err}");
    fs::write(tmp.path().join("bad.cfg"), "epochs = 2\nnot a line\n").unwrap();
    let (code, err) = exit_code(tmp.path(), &["train", "--config", "bad.cfg"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
    assert_eq!(exit_code(tmp.path(), &["train", "--set", "batch_size=7"]).0, 2);

    fs::write(tmp.path().join("ragged.csv"), "0,1.0,2.0\n1,3.0\n").unwrap();
    let (code, err) = exit_code(tmp.path(), &["train", "--set", "data.path=ragged.csv"]);
    assert_eq!(code, 2);
    assert!(err.contains("row 2"), "{err}");
}

#[test]
fn numeric_failures_exit_with_3() {
    let tmp = TempDir::new().unwrap();
    let mut rows = String::new();
    for i in 0..20 {
        rows.push_str(&format!("{},1e300,-1e300\n", i % 4));
    }
    fs::write(tmp.path().join("huge.csv"), rows).unwrap();
    let (code, err) = exit_code(
        tmp.path(),
        &[
            "train",
            "--set",
            "data.path=huge.csv",
            "--set",
            "batch_size=4",
            "--set",
            "per_class=2",
            "--set",
            "holdout_fraction=0",
        ],
    );
    assert_eq!(code, 3, "{err}");
}

#[test]
fn capacity_failures_exit_with_4() {
    let tmp = TempDir::new().unwrap();
    let (code, err) = exit_code(
        tmp.path(),
        &["simulate", "stability", "--set", "batch_size=2", "--set", "per_class=1"],
    );
    assert_eq!(code, 4, "{err}");
}
