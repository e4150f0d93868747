//! End-to-end runs of the `fuelguard` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fuelguard::neuralnet::{init_model, AutoencoderModel, LayerPlan};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fuelguard"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join("data.csv");
    let o = run(&["generate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn count_anomalies(csv_path: &Path) -> usize {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == "label").unwrap();
    r.records().filter(|rec| &rec.as_ref().unwrap()[idx] == "1").count()
}

#[test]
fn generate_hits_requested_rate_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.csv");
    let o = run(&["generate", "--n", "6000", "--rate", "0.351", "--seed", "7", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("2106 anomalous"), "{}", stdout(&o));
    assert_eq!(count_anomalies(&out), 2106);

    let again = dir.path().join("b.csv");
    run(&["generate", "--n", "6000", "--rate", "0.351", "--seed", "7", "--out", p(&again)]);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(code(&run(&["generate", "--n", "0", "--out", p(&out)])), 1);
    assert!(!out.exists());
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["detect", "--tau", "1"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn missing_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let o = run(&["train", "--input", p(&dir.path().join("absent.csv")), "--out-dir", p(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.csv"));
}

#[test]
fn missing_config_exits_two_and_bad_config_exits_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["--config", p(&dir.path().join("none.toml")), "generate"])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nepoch = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", p(&bad), "generate"])), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cfg.csv");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!("seed = 3\n[paths]\ninput = \"{}\"\n[generator]\nn = 50\nanomaly_rate = 0.2\n", p(&out)),
    )
    .unwrap();
    let o = run(&["--config", p(&cfg), "generate", "--rate", "0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(count_anomalies(&out), 25);
}

#[test]
fn zero_epoch_training_writes_the_initial_model() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 300, 1);
    let out = dir.path().join("m");
    let o = run(&["train", "--input", p(&data), "--out-dir", p(&out), "--epochs", "0", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (model, meta) = AutoencoderModel::from_json(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model, init_model(&LayerPlan::default_for(13), 5).unwrap());
    assert_eq!(meta.scaler.as_deref(), Some("scaler.json"));
    assert!(out.join("scaler.json").exists());
    let trace = std::fs::read_to_string(out.join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1);
}

#[test]
fn detect_reports_bounds_and_consistent_counts() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 400, 2);
    let m = dir.path().join("m");
    run(&["train", "--input", p(&data), "--out-dir", p(&m), "--epochs", "5"]);
    let res = dir.path().join("det.csv");
    let o = run(&["detect", "--model", p(&m.join("model.json")), "--input", p(&data), "--tau", "0.232", "--out", p(&res)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for b in ["0.232", "0.464", "0.928", "1.856"] {
        assert!(text.contains(b), "bound {b} missing from {text}");
    }

    let mut r = csv::Reader::from_path(&res).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    assert_eq!(rows.len(), 400);
    let mut anomalies = 0;
    for row in &rows {
        let score: f64 = row[1].parse().unwrap();
        assert_eq!(&row[2] == "anomaly", score > 0.232);
        anomalies += usize::from(&row[2] == "anomaly");
    }
    assert!(text.contains(&format!("{} normal, {anomalies} anomalous", 400 - anomalies)), "{text}");
}

#[test]
fn detect_on_empty_input_writes_only_a_header() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 200, 3);
    let m = dir.path().join("m");
    run(&["train", "--input", p(&data), "--out-dir", p(&m), "--epochs", "1"]);
    let header = std::fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, header + "\n").unwrap();
    let res = dir.path().join("det.csv");
    let o = run(&["detect", "--model", p(&m.join("model.json")), "--input", p(&empty), "--tau", "0.2", "--out", p(&res)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&res).unwrap(), "record_id,score,verdict,severity\n");
}

#[test]
fn trivial_targets_stop_after_one_round() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 400, 4);
    let out = dir.path().join("a");
    let o = run(&[
        "assist", "--input", p(&data), "--out-dir", p(&out), "--min-accuracy", "0", "--min-recall", "0", "--epochs", "5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let audit = std::fs::read_to_string(out.join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 1);
    assert!(audit.contains("\"stop\""));
    for f in ["model.json", "scaler.json", "threshold.json", "sweep.csv", "loss_trace.csv", "metrics.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    // 25 % of the records form the test split
    assert_eq!(metrics["records"], 100);
}

#[test]
fn analyze_writes_symmetric_correlations_and_scaled_importance() {
    let dir = TempDir::new().unwrap();
    let data = generate(dir.path(), 500, 5);
    let out = dir.path().join("an");
    let o = run(&["analyze", "--input", p(&data), "--out-dir", p(&out), "--trees", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut r = csv::Reader::from_path(out.join("correlation.csv")).unwrap();
    let names: Vec<String> = r.headers().unwrap().iter().skip(1).map(String::from).collect();
    let m: Vec<Vec<f64>> = r
        .records()
        .map(|x| x.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(m.len(), names.len());
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, m[j][i]);
            assert!((-1.0..=1.0).contains(v));
        }
    }

    let mut r = csv::Reader::from_path(out.join("importance.csv")).unwrap();
    let imp: Vec<f64> = r.records().map(|x| x.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(imp.len(), 13);
    assert_eq!(imp.iter().cloned().fold(f64::MIN, f64::max), 100.0);
    assert!(!out.join("sweep.csv").exists());
}
