use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tailreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tailreg")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Two-column dataset whose response is a deterministic Pareto-like sequence.
fn write_data(path: &Path, n: usize) {
    let mut s = String::from("y,a,b\n");
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let a = ((i * 7) % 11) as f64 / 10.0 - 0.5;
        let b = ((i * 3) % 5) as f64 / 5.0 - 0.4;
        s.push_str(&format!("{},{a},{b}\n", (1.0 - u).powf(-1.0)));
    }
    fs::write(path, s).unwrap();
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn quantile_at_origin_is_threshold_over_one_minus_tau() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_data(&data, 2000);
    let out = dir.path().join("out");
    let res = tailreg(&["quantile", "--data", data.to_str().unwrap(), "--tau", "0.9", "--x", "0,0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let q = json(&out.join("quantile.json"));
    let omega = tailreg::data::select_threshold(
        &(0..2000).map(|i| (1.0 - (i as f64 + 0.5) / 2000.0).powf(-1.0)).collect::<Vec<_>>(),
        0.95,
    )
    .unwrap();
    let q_hat = q["q_hat"].as_f64().unwrap();
    assert!((q_hat - omega / 0.1).abs() < 1e-9 * q_hat, "{q_hat} vs {}", omega / 0.1);
    assert_eq!(q["method"], "crossfit");
    assert_eq!(q["K"], 5);
}

#[test]
fn huge_lambda_gives_empty_support() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_data(&data, 1000);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[tuning]\nlambda = 1e6\n").unwrap();
    let out = dir.path().join("out");
    let res = tailreg(&["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let fit = json(&out.join("fit.json"));
    assert_eq!(fit["support"].as_array().unwrap().len(), 0);
    assert!(fit["theta"].as_array().unwrap().iter().all(|t| t.as_f64() == Some(0.0)));
    assert_eq!(fit["converged"], true);
}

#[test]
fn single_replicate_is_flagged_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = tailreg(&["simulate", "--design", "sparse-gaussian", "--n", "2000", "--p", "12", "--reps", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("degenerate"), "true");
    assert_eq!(col("reps"), "1");
    assert_eq!(fs::read_to_string(out.join("replicates.csv")).unwrap().lines().count(), 2);
}

#[test]
fn exit_codes_by_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    // unknown flag and unknown config key are configuration errors
    assert_eq!(code(&tailreg(&["fit", "--no-such-flag"])), 2);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[tuning]\nlamda_c = 1.0\n").unwrap();
    assert_eq!(code(&tailreg(&["fit", "--config", cfg.to_str().unwrap(), "--out", out])), 2);
    assert_eq!(code(&tailreg(&["quantile", "--tau", "1.5", "--out", out])), 2);

    // missing files and empty tails are data errors
    assert_eq!(code(&tailreg(&["fit", "--data", "/nonexistent/data.csv", "--out", out])), 3);
    let data = dir.path().join("flat.csv");
    fs::write(&data, "y,a\n1,0\n1,1\n1,0\n1,1\n").unwrap();
    assert_eq!(code(&tailreg(&["fit", "--data", data.to_str().unwrap(), "--out", out])), 3);
    let corpus = dir.path().join("empty.csv");
    fs::write(&corpus, "id,text,likes\n").unwrap();
    assert_eq!(code(&tailreg(&["text-prep", "--corpus", corpus.to_str().unwrap(), "--out", out])), 3);
}

#[test]
fn loglog_writes_rank_table_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, format!("y,a\n1,0\n{},0\n{},1\n0,1\n", std::f64::consts::E, std::f64::consts::E.powi(2))).unwrap();
    let out = dir.path().join("out");
    let res = tailreg(&["loglog", "--data", data.to_str().unwrap(), "--fraction", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let table = fs::read_to_string(out.join("loglog.csv")).unwrap();
    let rows: Vec<(usize, f64)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let (r, v) = l.split_once(',').unwrap();
            (r.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 3);
    for ((r, v), (er, ev)) in rows.iter().zip([(1, 2.0), (2, 1.0), (3, 0.0)]) {
        assert_eq!(*r, er);
        assert!((v - ev).abs() < 1e-12);
    }
    assert!(json(&out.join("loglog_slope.json")).is_object());
}
