use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dropauc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropauc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap(), "--set", "n=400", "--set", "epochs=2"];
    for e in extra {
        args.extend(["--set", e]);
    }
    dropauc(&args)
}

#[test]
fn one_epoch_trace_has_one_data_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = train(&out, &["epochs=1"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("epoch,steps,objective"));
    assert!(lines[1].starts_with("1,"));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["command"], "train");
    for key in ["opauc_0.3", "opauc_0.5", "tpauc_0.6_0.4", "tpauc_0.5_0.5"] {
        assert!(summary["train"][key].is_number(), "{key}");
        assert!(summary["val"][key].is_number(), "{key}");
    }
    assert!(out.join("model.json").is_file());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&train(out, &["optimizer=sota-s", "batch_log=true"])), 0);
    }
    for name in ["trace.csv", "summary.json", "model.json", "batches.tsv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_and_config_file_feed_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nn = 400\nepochs = 1\neta1 = 0.5\n").unwrap();
    let out = dir.path().join("run");
    let res = dropauc(&[
        "train", "--config", cfg.to_str().unwrap(), "--seed", "9", "--set", "eta1=0.02", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["config"]["eta1"], "0.02");
    assert_eq!(summary["config"]["n"], "400");
}

#[test]
fn eval_reproduces_training_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&train(&out, &[])), 0);
    let ck = format!("checkpoint={}", out.join("model.json").display());
    let eval_out = dir.path().join("eval");
    let res = dropauc(&["eval", "--set", "n=400", "--set", &ck, "--out", eval_out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (t, e) = (json(&out.join("summary.json")), json(&eval_out.join("summary.json")));
    assert_eq!(e["schema_version"], 1);
    assert_eq!(t["train"], e["train"]);
    assert_eq!(t["val"], e["val"]);
}

#[test]
fn csv_data_source_trains() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut text = String::from("x1,x2,label\n");
    for i in 0..60 {
        let pos = i % 4 == 0;
        let x = (i as f64 * 0.37).sin() + if pos { 1.0 } else { 0.0 };
        text.push_str(&format!("{x},{},{}\n", (i as f64 * 0.11).cos(), if pos { 1 } else { 0 }));
    }
    fs::write(&path, text).unwrap();
    let out = dir.path().join("run");
    let data = format!("data={}", path.display());
    let res = dropauc(&[
        "train", "--set", &data, "--set", "epochs=2", "--set", "batch_pos=4", "--set", "batch_neg=8", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["sizes"]["train"], serde_json::json!([12, 36]));
}

#[test]
fn validation_errors_exit_1_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = out.to_str().unwrap();
    for args in [
        vec!["train", "--out", o, "--set", "gamma0=1.5"],
        vec!["train", "--out", o, "--set", "no_such_key=1"],
        vec!["train", "--out", o, "--set", "data=/missing/data.csv"],
        vec!["train", "--out", o, "--set", "epochs=lots"],
        vec!["train", "--out", o, "--config", "/missing/run.cfg"],
        vec!["eval", "--out", o],
        vec!["re-curve", "--out", o, "--set", "re_lambdas="],
        vec!["sweep", "--out", o, "--set", "sweep.lambda=1,-1"],
        vec!["bogus"],
    ] {
        let res = dropauc(&args);
        assert_eq!(code(&res), 1, "{args:?}");
        assert!(!res.stderr.is_empty(), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = train(&out, &["optimizer=sopa-s", "arch=linear_raw", "lambda=1e-3", "update_style=sgd"]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("non-finite"));
}

#[test]
fn single_point_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let (t, s) = (dir.path().join("train"), dir.path().join("sweep"));
    assert_eq!(code(&train(&t, &[])), 0);
    let res = dropauc(&[
        "sweep", "--set", "n=400", "--set", "epochs=2", "--set", "sweep.lambda=1", "--out", s.to_str().unwrap(),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let run = s.join("runs/run_000");
    for name in ["trace.csv", "summary.json", "model.json"] {
        assert_eq!(fs::read(t.join(name)).unwrap(), fs::read(run.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn lambda_sweep_ranks_deterministically_and_dominates_default() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = |name: &str| {
        let out = dir.path().join(name);
        let res = dropauc(&[
            "sweep", "--set", "n=400", "--set", "epochs=2", "--set", "optimizer=sota-s", "--set", "sweep.lambda=0.1,1,10",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        out
    };
    let (a, b) = (sweep("a"), sweep("b"));
    let table = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(table.lines().count(), 4);
    let summary = json(&a.join("sweep.json"));
    assert_eq!(summary["schema_version"], 1);
    let ranking = summary["ranking"].as_array().unwrap();
    let values: Vec<f64> = ranking.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] >= w[1]));

    let single = dir.path().join("single");
    assert_eq!(code(&train(&single, &["optimizer=sota-s"])), 0);
    let default_val = json(&single.join("summary.json"))["val"]["tpauc_0.5_0.5"].as_f64().unwrap();
    assert!(values[0] >= default_val);
}

#[test]
fn re_curve_dips_below_five_percent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("re");
    let res = dropauc(&["re-curve", "--set", "re_betas=0.3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let mut rdr = csv::Reader::from_path(out.join("re_curve.csv")).unwrap();
    let best = rdr
        .records()
        .map(|r| r.unwrap()[2].parse::<f64>().unwrap())
        .fold(f64::INFINITY, f64::min);
    assert!(best < 0.05, "{best}");
    assert_eq!(json(&out.join("summary.json"))["schema_version"], 1);
}

#[test]
fn selftest_passes_for_several_seeds() {
    for seed in ["0", "11"] {
        let res = dropauc(&["selftest", "--seed", seed]);
        let text = String::from_utf8_lossy(&res.stdout);
        assert_eq!(code(&res), 0, "{text}");
        assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 8, "{text}");
    }
}

#[test]
fn sopa_beats_cross_entropy_on_hard_negatives() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "preset=hard_negatives", "n=2000", "dim=10", "val_frac=0", "epochs=60", "batch_pos=32", "batch_neg=64",
        "gamma1=0.1", "eta1=0.01",
    ];
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let sets: Vec<&str> = common.iter().chain(extra).copied().collect();
        assert_eq!(code(&train(&out, &sets)), 0);
        json(&out.join("summary.json"))["train"]["opauc_0.3"].as_f64().unwrap()
    };
    let ce = run("ce", &["optimizer=ce"]);
    let sopa = run("sopa", &["optimizer=sopa", "eta2=1", "beta_fpr=0.3"]);
    assert!(sopa >= ce + 0.01, "sopa {sopa} ce {ce}");
}
