use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn pipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipe"))
        .args(args)
        .env_remove("PIPE_OUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn pipe")
}

fn ok(args: &[&str]) -> Output {
    let out = pipe(args);
    assert!(
        out.status.success(),
        "pipe {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, tracks: usize, length: usize) -> PathBuf {
    let d = dir.join("data");
    ok(&[
        "gen-data",
        "--seed",
        "3",
        "--tracks",
        &tracks.to_string(),
        "--length",
        &length.to_string(),
        "--out",
        s(&d),
    ]);
    d
}

/// Every file under `dir` with its bytes.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn gen_data_splits_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = gen(tmp.path(), 10, 30);
    let split: Value = serde_json::from_slice(&fs::read(a.join("split.json")).unwrap()).unwrap();
    let n = |k: &str| split[k].as_array().unwrap().len();
    assert_eq!((n("train"), n("val"), n("test")), (7, 1, 2));
    let csv = fs::read_to_string(a.join("tracks.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 30);

    let b = tmp.path().join("again");
    ok(&["gen-data", "--seed", "3", "--tracks", "10", "--length", "30", "--out", s(&b)]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        if k != Path::new("config.toml") {
            assert!(v == &sb[k], "{} differs between reruns", k.display());
        }
    }
}

#[test]
fn short_tracks_are_rejected_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("never");
    let out = pipe(&["gen-data", "--tracks", "5", "--length", "23", "--out", s(&d)]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["error"], "config");
    assert!(!d.exists());
}

#[test]
fn error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing");
    let out = pipe(&["eval", "--data", s(&missing), "--forecasts", "x.jsonl", "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    let out = pipe(&["encode-dump", "--scheme", "spiral"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pipe(&["ablate", "--axes", "colour", "--data", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
}

struct Dump {
    /// `values[axis][token]`
    values: [Vec<f64>; 3],
    vision: Vec<bool>,
}

fn dump(data: &Path, out: &Path, extra: &[&str]) -> Dump {
    let mut args = vec!["encode-dump", "--data", s(data), "--out", s(out)];
    args.extend_from_slice(extra);
    ok(&args);
    let mut values: [Vec<f64>; 3] = Default::default();
    let mut r = csv::Reader::from_path(out.join("positions.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["axis", "index", "value"]);
    for rec in r.records() {
        let rec = rec.unwrap();
        let axis = ["temporal", "height", "width"].iter().position(|a| *a == &rec[0]).unwrap();
        assert_eq!(rec[1].parse::<usize>().unwrap(), values[axis].len());
        values[axis].push(rec[2].parse().unwrap());
    }
    let vision = csv::Reader::from_path(out.join("tokens.csv"))
        .unwrap()
        .records()
        .map(|r| &r.unwrap()[1] == "vision")
        .collect();
    Dump { values, vision }
}

#[test]
fn encode_dump_schemes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 3, 24);

    let text = dump(&data, &tmp.path().join("t"), &["--scheme", "sequential", "--text-only"]);
    assert!(text.vision.iter().all(|v| !v));
    assert_eq!(text.values[0], text.values[1]);
    assert_eq!(text.values[1], text.values[2]);
    for scheme in ["three_d", "physics"] {
        let other = dump(&data, &tmp.path().join(scheme), &["--scheme", scheme, "--text-only"]);
        assert_eq!(other.values, text.values);
    }

    let phys = dump(&data, &tmp.path().join("p"), &["--scheme", "physics"]);
    let n_vision = phys.vision.iter().filter(|&&v| v).count();
    assert_eq!(n_vision, 12 * 4);
    for axis in &phys.values {
        for (v, &is_vision) in axis.iter().zip(&phys.vision) {
            assert_eq!(*v < 0.0, is_vision);
        }
    }
    let pe = csv::Reader::from_path(tmp.path().join("p/pe.csv")).unwrap().records().count();
    assert_eq!(pe, phys.vision.len() * 128);

    // three_d and physics agree up to the first image, disagree on every
    // vision row, and later text runs differ by one offset per run
    let td = dump(&data, &tmp.path().join("3d"), &["--scheme", "three_d"]);
    assert_eq!(td.vision, phys.vision);
    let first = phys.vision.iter().position(|&v| v).unwrap();
    for a in 0..3 {
        assert_eq!(td.values[a][..first], phys.values[a][..first]);
        let mut offset: Option<f64> = None;
        for i in first..phys.vision.len() {
            let (x, y) = (td.values[a][i], phys.values[a][i]);
            if phys.vision[i] {
                assert_ne!(x, y, "vision row {i}");
                offset = None;
            } else {
                let d = x - y;
                assert!(d > 0.0);
                assert_eq!(*offset.get_or_insert(d), d, "text row {i}");
            }
        }
    }

    // the resolved configuration alone reproduces the dump
    let cfg = tmp.path().join("p/config.toml");
    let again = tmp.path().join("p2");
    ok(&["encode-dump", "--config", s(&cfg), "--out", s(&again)]);
    for f in ["positions.csv", "tokens.csv", "pe.csv"] {
        assert_eq!(
            fs::read(tmp.path().join("p").join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

fn all_numbers(v: &Value, out: &mut Vec<(String, f64)>, path: String) {
    match v {
        Value::Number(n) => out.push((path, n.as_f64().unwrap())),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| all_numbers(x, out, format!("{path}[{i}]"))),
        Value::Object(o) => o.iter().for_each(|(k, x)| all_numbers(x, out, format!("{path}.{k}"))),
        _ => {}
    }
}

#[test]
fn oracle_forecasts_score_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 10, 26);
    let fc = tmp.path().join("fc");
    ok(&["forecast", "--data", s(&data), "--oracle", "--out", s(&fc)]);
    let ev = tmp.path().join("ev");
    ok(&[
        "eval",
        "--data",
        s(&data),
        "--forecasts",
        s(&fc.join("forecasts.jsonl")),
        "--out",
        s(&ev),
    ]);
    let m: Value = serde_json::from_slice(&fs::read(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["n_forecasts"], 2 * 3);
    assert_eq!(m["parse_failure_count"], 0);
    let mut nums = Vec::new();
    all_numbers(&m, &mut nums, String::new());
    for (path, v) in nums {
        if !["horizon", "n_forecasts", "n_scored"].iter().any(|k| path.ends_with(k)) {
            assert_eq!(v, 0.0, "{path}");
        }
    }
    let rows = csv::Reader::from_path(ev.join("regression.csv")).unwrap().records().count();
    assert_eq!(rows, 6 * 12 * 3);
}

#[test]
fn ablate_scheme_axis_gives_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen(tmp.path(), 5, 24);
    let out = tmp.path().join("abl");
    let inputs = snapshot(&data);
    ok(&[
        "ablate", "--data", s(&data), "--out", s(&out), "--axes", "scheme", "--seeds", "0",
        "--d-model", "16", "--layers", "1", "--heads", "2", "--steps", "1", "--max-new", "8",
    ]);
    let mut r = csv::Reader::from_path(out.join("ablation.csv")).unwrap();
    let rows: Vec<_> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let schemes: Vec<_> = rows.iter().map(|r| r[2].to_string()).collect();
    assert_eq!(schemes, ["sequential", "three_d", "physics"]);
    // an untrained model cannot finish a forecast in 8 characters; the
    // failure is recorded per run instead of aborting the table
    let runs = fs::read_to_string(out.join("ablation_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
    assert!(out.join("config.toml").exists());
    assert_eq!(snapshot(&data), inputs, "ablate modified its inputs");
}

#[test]
fn train_forecast_eval_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let data = gen(tmp.path(), 10, 48);
    let run = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--out", s(&run)]);
    let report: Value = serde_json::from_slice(&fs::read(run.join("train_report.json")).unwrap()).unwrap();
    let trace = report["loss_trace"].as_array().unwrap();
    assert_eq!(trace.len(), report["steps"].as_u64().unwrap() as usize);
    assert!(trace.last().unwrap().as_f64().unwrap() < trace[0].as_f64().unwrap());

    let fc = tmp.path().join("fc");
    ok(&[
        "forecast",
        "--data",
        s(&data),
        "--checkpoint",
        s(&run.join("checkpoint.json")),
        "--out",
        s(&fc),
    ]);
    let lines = fs::read_to_string(fc.join("forecasts.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2 * 25);

    let ev = tmp.path().join("ev");
    let out = pipe(&[
        "eval",
        "--data",
        s(&data),
        "--forecasts",
        s(&fc.join("forecasts.jsonl")),
        "--out",
        s(&ev),
    ]);
    // a briefly trained model may not yet emit parseable forecasts; that is
    // a data error, not a crash
    match out.status.code() {
        Some(0) => assert!(ev.join("metrics.json").exists()),
        Some(3) => {
            let diag: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
            assert_eq!(diag["error"], "data");
        }
        other => panic!("eval exited with {other:?}"),
    }
    assert!(t.elapsed().as_secs() < 600, "pipeline took {:?}", t.elapsed());
}

#[test]
fn out_dir_env_var() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_pipe"))
        .args(["gen-data", "--tracks", "3", "--length", "24"])
        .env("PIPE_OUT_DIR", &d)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("tracks.csv").exists() && d.join("split.json").exists());
}
