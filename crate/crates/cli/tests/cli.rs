use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn phenowarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phenowarp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = phenowarp(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const HEADER: &str = "field_id,year,doy,blue,green,red,nir,qa,vi\n";

fn write_obs(dir: &Path, name: &str, rows: &[(&str, i32, i32, &str, f64)]) -> PathBuf {
    let mut text = HEADER.to_string();
    for (id, year, doy, qa, vi) in rows {
        text.push_str(&format!("{id},{year},{doy},,,,,{qa},{vi}\n"));
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, n: &str) -> (PathBuf, PathBuf, PathBuf) {
    let out = dir.join("sim");
    ok(&["--seed", "5", "simulate", "--out", s(&out), "--n-per-class", n]);
    (
        out.join("observations_2019.csv"),
        out.join("observations_2020.csv"),
        out.join("labels.csv"),
    )
}

#[test]
fn distance_of_a_field_to_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let obs = write_obs(
        dir.path(),
        "obs.csv",
        &[("A", 2019, 1, "clear", 0.2), ("A", 2019, 2, "clear", 0.5), ("A", 2019, 3, "clear", 0.4)],
    );
    let stdout = ok(&["distance", "--observations", s(&obs), "--a", "A", "--b", "A@2019"]);
    assert!(stdout.contains("distance (vdtw): 0.000000000000"), "{stdout}");
}

#[test]
fn distance_prints_the_worked_example() {
    let dir = TempDir::new().unwrap();
    let obs = write_obs(
        dir.path(),
        "obs.csv",
        &[
            ("X", 2019, 1, "clear", 0.0),
            ("X", 2019, 2, "clear", 1.0),
            ("X", 2019, 3, "clear", 1.0),
            ("Y", 2019, 1, "clear", 1.0),
            ("Y", 2019, 2, "clear", 1.0),
            ("Y", 2019, 3, "clear", 0.0),
        ],
    );
    let stdout = ok(&["distance", "--observations", s(&obs), "--a", "X", "--b", "Y", "--band-days", "inf"]);
    let q = std::f64::consts::FRAC_PI_4;
    assert!(stdout.contains(&format!("psi\n  {q:.6} {:.6}\n  0.000000 {q:.6}\n", 2.0 * q)), "{stdout}");
    assert!(stdout.contains(&format!("distance (vdtw): {:.12}", 2.0 * q)), "{stdout}");
}

#[test]
fn blocked_band_reports_no_path() {
    let dir = TempDir::new().unwrap();
    let obs = write_obs(
        dir.path(),
        "obs.csv",
        &[
            ("A", 2019, 100, "clear", 0.1),
            ("A", 2019, 110, "clear", 0.2),
            ("B", 2019, 200, "clear", 0.1),
            ("B", 2019, 210, "clear", 0.2),
        ],
    );
    let out = phenowarp(&["distance", "--observations", s(&obs), "--a", "A", "--b", "B"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no warping path"));
}

#[test]
fn same_year_classification_is_perfect_on_separable_classes() {
    let dir = TempDir::new().unwrap();
    let (a, _, labels) = simulate(dir.path(), "15");
    let out = dir.path().join("cls");
    ok(&[
        "classify",
        "--observations",
        s(&a),
        "--labels",
        s(&labels),
        "--train-year",
        "2019",
        "--replications",
        "5",
        "--out",
        s(&out),
    ]);
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["overall_accuracy"], 1.0);
    let keys: Vec<&str> = metrics.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["kappa", "overall_accuracy", "per_replication", "producers_accuracy", "users_accuracy"]
    );
    let confusion = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("pred\\obs,corn,cotton\n"), "{confusion}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b, labels) = simulate(dir.path(), "10");
    let run = |out: &Path, threads: &str| {
        ok(&[
            "--seed",
            "9",
            "--threads",
            threads,
            "classify",
            "--observations",
            &format!("{},{}", s(&a), s(&b)),
            "--labels",
            s(&labels),
            "--train-year",
            "2019",
            "--test-year",
            "2020",
            "--replications",
            "4",
            "--out",
            s(out),
        ]);
    };
    let (x, y) = (dir.path().join("x"), dir.path().join("y"));
    run(&x, "1");
    run(&y, "2");
    for f in ["metrics.json", "confusion.csv"] {
        assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap(), "{f}");
    }

    let again = dir.path().join("sim2");
    ok(&["--seed", "5", "simulate", "--out", s(&again), "--n-per-class", "10"]);
    for f in ["observations_2019.csv", "observations_2020.csv", "labels.csv"] {
        let first = fs::read(dir.path().join("sim").join(f)).unwrap();
        assert_eq!(first, fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let dir = TempDir::new().unwrap();
    let (a, _, labels) = simulate(dir.path(), "10");
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!(
            "# shared settings\nobservations = {}\nlabels = {}\ntrain-year = 2019\nreplications = 3\nmeasure = dtw\nseed = 4\n",
            s(&a),
            s(&labels)
        ),
    )
    .unwrap();
    let out = dir.path().join("cls");
    let stdout = ok(&[
        "classify",
        "--config",
        s(&cfg),
        "--measure",
        "twdtw",
        "--out",
        s(&out),
    ]);
    assert!(stdout.starts_with("twdtw 2019->2019"), "{stdout}");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["classify"]["replications"], 3);

    fs::write(&cfg, "no-such-key = 1\n").unwrap();
    let bad = phenowarp(&["classify", "--config", s(&cfg), "--out", s(&out)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown config key `no-such-key`"));
}

#[test]
fn unknown_flags_are_rejected() {
    let out = phenowarp(&["evaluate", "--predictions", "p.csv", "--out", "o", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag() {
    let help = ok(&["classify", "--help"]);
    for flag in [
        "--observations",
        "--labels",
        "--index",
        "--smoothing",
        "--measure",
        "--band-days",
        "--train-year",
        "--test-year",
        "--samples-per-class",
        "--replications",
        "--window",
        "--seed",
        "--threads",
        "--config",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn preprocess_counts_filled_gaps() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "field_id,year,crop\nA,2019,corn\nB,2019,cotton\n").unwrap();
    let rows = |cloudy: bool| -> Vec<(&str, i32, i32, &str, f64)> {
        let mut v = Vec::new();
        for (id, base) in [("A", 0.2), ("B", 0.4)] {
            for k in 0..9 {
                let qa = if cloudy && id == "A" && k == 4 { "cloud" } else { "clear" };
                v.push((id, 2019, 100 + 10 * k, qa, base + 0.01 * k as f64));
            }
        }
        v
    };
    for (cloudy, expected) in [(false, 0), (true, 1)] {
        let obs = write_obs(dir.path(), "obs.csv", &rows(cloudy));
        let out = dir.path().join(format!("pre{expected}"));
        ok(&["preprocess", "--observations", s(&obs), "--labels", s(&labels), "--out", s(&out)]);
        let report: Value =
            serde_json::from_str(&fs::read_to_string(out.join("preprocess_report.json")).unwrap()).unwrap();
        assert_eq!(report["filled_gaps"], expected);
        assert_eq!(report["grid"]["t_l"], 100);
        assert_eq!(report["grid"]["t_u"], 180);
        let dataset = fs::read_to_string(out.join("dataset.csv")).unwrap();
        assert!(dataset.starts_with(HEADER));
        assert_eq!(dataset.lines().count(), 1 + 2 * 81);
    }
}

#[test]
fn disjoint_calendars_are_an_error() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "field_id,year,crop\nA,2019,corn\nB,2020,corn\n").unwrap();
    let obs = write_obs(
        dir.path(),
        "obs.csv",
        &[
            ("A", 2019, 100, "clear", 0.1),
            ("A", 2019, 120, "clear", 0.2),
            ("B", 2020, 200, "clear", 0.1),
            ("B", 2020, 220, "clear", 0.2),
        ],
    );
    let out = phenowarp(&[
        "preprocess",
        "--observations",
        s(&obs),
        "--labels",
        s(&labels),
        "--smoothing",
        "none",
        "--out",
        s(&dir.path().join("pre")),
    ]);
    assert!(!out.status.success());
    assert!(!dir.path().join("pre").join("dataset.csv").exists());
}

#[test]
fn select_window_then_classify_inside_it() {
    let dir = TempDir::new().unwrap();
    let (a, _, labels) = simulate(dir.path(), "12");
    let win = dir.path().join("win");
    ok(&[
        "select-window",
        "--observations",
        s(&a),
        "--labels",
        s(&labels),
        "--year",
        "2019",
        "--step",
        "8",
        "--eps1",
        "0.05",
        "--eps2",
        "0.05",
        "--out",
        s(&win),
    ]);
    let window: Value = serde_json::from_str(&fs::read_to_string(win.join("window.json")).unwrap()).unwrap();
    let (o1, o2) = (window["window"][0].as_i64().unwrap(), window["window"][1].as_i64().unwrap());
    let pivot = window["pivot"].as_i64().unwrap();
    assert!(o1 <= pivot && pivot <= o2 && o1 < o2);
    let curve = fs::read_to_string(win.join("scores_corn_cotton.csv")).unwrap();
    assert!(curve.starts_with("day,score_left,score_right\n"));

    let out = dir.path().join("cls");
    ok(&[
        "classify",
        "--observations",
        s(&a),
        "--labels",
        s(&labels),
        "--step",
        "8",
        "--train-year",
        "2019",
        "--replications",
        "3",
        "--window-file",
        s(&win.join("window.json")),
        "--out",
        s(&out),
    ]);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "classify");
}

#[test]
fn evaluate_reads_prediction_files() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("predicted,observed\n");
    for (p, o, n) in [("a", "a", 40), ("a", "b", 10), ("b", "a", 10), ("b", "b", 40)] {
        for _ in 0..n {
            text.push_str(&format!("{p},{o}\n"));
        }
    }
    let preds = dir.path().join("preds.csv");
    fs::write(&preds, text).unwrap();
    let out = dir.path().join("eval");
    ok(&["evaluate", "--predictions", s(&preds), "--out", s(&out)]);
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["overall_accuracy"], 0.8);
    assert_eq!(metrics["kappa"], 0.6);
    assert_eq!(
        fs::read_to_string(out.join("confusion.csv")).unwrap(),
        "pred\\obs,a,b\na,40,10\nb,10,40\n"
    );
}
