//! Subcommand bodies. Each reads its settings from a fully merged
//! [`RunConfig`] and writes artifacts under the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fuelguard::analysis::{correlation_matrix, feature_importance};
use fuelguard::assist::{run_assist_loop, write_audit_log, AssistAction, AssistData};
use fuelguard::dataset::{
    generate_synthetic, load_labeled, to_feature_matrix, write_labeled_csv, write_rejections, LoadedData, ProfileBook,
    Schema,
};
use fuelguard::detector::{
    confusion_at, default_grid, score, severity, severity_bounds, sweep_threshold, write_detections, ScoreMode,
    Severity,
};
use fuelguard::metrics::{compute_metrics, ConfusionCounts, Label};
use fuelguard::neuralnet::{init_model, train, AutoencoderModel, ModelMetadata};
use fuelguard::preprocess::{prepare, ScalerParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub const MODEL_FILE: &str = "model.json";
pub const SCALER_FILE: &str = "scaler.json";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const THRESHOLD_FILE: &str = "threshold.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const REJECTIONS_FILE: &str = "rejections.csv";

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Core(fuelguard::Error::FileNotFound(path.to_path_buf())),
        _ => e.into(),
    })
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn input(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.paths
        .input
        .as_deref()
        .ok_or_else(|| CliError::Usage("an input CSV is required (--input or paths.input)".into()))
}

/// Load and label the input file. Rejected rows are logged and, when any
/// exist, written to `rejections.csv` in the output directory.
fn load(cfg: &RunConfig) -> Result<LoadedData, CliError> {
    let book = ProfileBook::new(cfg.profiles()?);
    let data = load_labeled(input(cfg)?, &Schema::default(), &book)?;
    if !data.rejections.is_empty() {
        log::warn!("{} rows rejected during ingestion", data.rejections.len());
        let mut w = create(&out_dir(cfg).join(REJECTIONS_FILE))?;
        write_rejections(&mut w, &data.rejections)?;
        w.flush()?;
    }
    Ok(data)
}

fn model_and_scaler(cfg: &RunConfig) -> Result<(AutoencoderModel, ScalerParams), CliError> {
    let model_path = cfg
        .paths
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("a model file is required (--model or paths.model)".into()))?;
    let (model, meta) = AutoencoderModel::from_json(&read_text(model_path)?)?;
    let scaler_path = match (&cfg.paths.scaler, meta.scaler) {
        (Some(p), _) => p.clone(),
        // recorded paths are relative to the model file
        (None, Some(p)) => model_path.parent().unwrap_or(Path::new("")).join(p),
        (None, None) => return Err(CliError::Usage("a scaler file is required (--scaler)".into())),
    };
    let scaler = ScalerParams::from_json(&read_text(&scaler_path)?)?;
    Ok((model, scaler))
}

fn scores_for(
    model: &AutoencoderModel,
    scaler: &ScalerParams,
    data: &LoadedData,
    mode: ScoreMode,
) -> Result<(Vec<f64>, Vec<Label>), CliError> {
    let (x, labels) = to_feature_matrix(&data.records, &scaler.feature_names())?;
    let scores = score(model, scaler, &x, mode)?.iter().map(|r| r.score).collect();
    Ok((scores, labels))
}

fn save_model(
    dir: &Path,
    model: &AutoencoderModel,
    scaler: &ScalerParams,
    train_config: fuelguard::neuralnet::TrainConfig,
) -> Result<(), CliError> {
    let meta = ModelMetadata {
        scaler: Some(SCALER_FILE.to_string()),
        train_config: Some(train_config),
    };
    write_text(&dir.join(MODEL_FILE), &model.to_json(&meta)?)?;
    write_text(&dir.join(SCALER_FILE), &scaler.to_json()?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let g = &cfg.generator;
    let records = generate_synthetic(g.n, g.anomaly_rate, cfg.seed, &cfg.profiles()?)?;
    let mut w = create(out)?;
    write_labeled_csv(&mut w, &records)?;
    w.flush()?;
    let anomalies = records.iter().filter(|r| r.label.is_anomaly()).count();
    println!(
        "wrote {} records to {} ({} normal, {} anomalous)",
        records.len(),
        out.display(),
        records.len() - anomalies,
        anomalies
    );
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load(cfg)?;
    let prepared = prepare(&data.records, &cfg.features, &cfg.split_spec())?;
    let hp = cfg.hyperparams();
    let model = init_model(&hp.plan(prepared.normal_train.n_features()), hp.seed)?;
    let val_idx: Vec<usize> = (0..prepared.validation_labels.len())
        .filter(|&i| !prepared.validation_labels[i].is_anomaly())
        .collect();
    let val_normals = prepared.validation.select(&val_idx);
    let (model, trace) = train(&model, &prepared.normal_train, &val_normals, &hp.train_config())?;

    let dir = out_dir(cfg);
    save_model(&dir, &model, &prepared.scaler, hp.train_config())?;
    let mut w = create(&dir.join(TRACE_FILE))?;
    trace.write_csv(&mut w)?;
    w.flush()?;

    println!(
        "trained on {} normal records ({} training anomalies removed)",
        prepared.normal_train.n_obs(),
        prepared.removed
    );
    match trace.train_loss.last() {
        Some(l) => println!("final training loss after {} epochs: {l:.6}", trace.epochs()),
        None => println!("no epochs run; model left at its initialisation"),
    }
    println!("model written to {}", dir.join(MODEL_FILE).display());
    Ok(())
}

fn tau(cfg: &RunConfig) -> Result<f64, CliError> {
    let t = cfg
        .detect
        .tau
        .ok_or_else(|| CliError::Usage("a threshold is required (--tau or detect.tau)".into()))?;
    if !t.is_finite() || t <= 0.0 {
        return Err(CliError::Usage(format!("threshold must be a positive number, got {t}")));
    }
    Ok(t)
}

pub fn detect(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let t = tau(cfg)?;
    let (model, scaler) = model_and_scaler(cfg)?;
    let data = load(cfg)?;
    let (scores, _) = scores_for(&model, &scaler, &data, cfg.detect.score_mode)?;

    let out = out.map_or_else(|| out_dir(cfg).join(DETECTIONS_FILE), Path::to_path_buf);
    let mut w = create(&out)?;
    write_detections(&mut w, &data.rows, &scores, t)?;
    w.flush()?;

    let bounds = severity_bounds(t);
    println!(
        "severity bounds: A ({}, {}], B ({}, {}], C ({}, {}], D > {}",
        bounds[0], bounds[1], bounds[1], bounds[2], bounds[2], bounds[3], bounds[3]
    );
    let classes = [Severity::Normal, Severity::A, Severity::B, Severity::C, Severity::D];
    let mut counts = [0usize; 5];
    for &s in &scores {
        let c = severity(s, t);
        counts[classes.iter().position(|&k| k == c).expect("known class")] += 1;
    }
    let anomalies: usize = counts[1..].iter().sum();
    println!("scored {} records: {} normal, {} anomalous", scores.len(), counts[0], anomalies);
    for (k, n) in classes[1..].iter().zip(&counts[1..]) {
        println!("  class {k}: {n}");
    }
    println!("results written to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    threshold: f64,
    score_mode: ScoreMode,
    records: usize,
    counts: &'a ConfusionCounts,
    metrics: &'a fuelguard::metrics::MetricSet,
}

fn metrics_json(
    scores: &[f64],
    labels: &[Label],
    threshold: f64,
    mode: ScoreMode,
) -> Result<(String, fuelguard::metrics::MetricSet), CliError> {
    let counts = confusion_at(scores, labels, threshold)?;
    let metrics = compute_metrics(&counts)?;
    let file = MetricsFile {
        threshold,
        score_mode: mode,
        records: scores.len(),
        counts: &counts,
        metrics: &metrics,
    };
    let text = serde_json::to_string_pretty(&file).map_err(fuelguard::Error::from)?;
    Ok((text + "\n", metrics))
}

pub fn evaluate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let t = tau(cfg)?;
    let (model, scaler) = model_and_scaler(cfg)?;
    let data = load(cfg)?;
    let (scores, labels) = scores_for(&model, &scaler, &data, cfg.detect.score_mode)?;
    let (text, _) = metrics_json(&scores, &labels, t, cfg.detect.score_mode)?;
    let out = out.map_or_else(|| out_dir(cfg).join(METRICS_FILE), Path::to_path_buf);
    write_text(&out, &text)?;
    print!("{text}");
    Ok(())
}

pub fn assist(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load(cfg)?;
    let prepared = prepare(&data.records, &cfg.features, &cfg.split_spec())?;
    let assist_data = AssistData {
        normal_train: &prepared.normal_train,
        validation: &prepared.validation,
        validation_labels: &prepared.validation_labels,
    };
    let mode = cfg.detect.score_mode;
    let outcome = run_assist_loop(&assist_data, &cfg.hyperparams(), &cfg.search_space(), &cfg.targets(), mode)?;

    let dir = out_dir(cfg);
    save_model(&dir, &outcome.model, &prepared.scaler, outcome.hyperparams.train_config())?;
    let mut w = create(&dir.join(AUDIT_FILE))?;
    write_audit_log(&mut w, &outcome.audit)?;
    w.flush()?;
    let threshold_json = serde_json::to_string_pretty(&outcome.decision).map_err(fuelguard::Error::from)?;
    write_text(&dir.join(THRESHOLD_FILE), &(threshold_json + "\n"))?;
    let mut w = create(&dir.join(SWEEP_FILE))?;
    outcome.decision.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(TRACE_FILE))?;
    outcome.trace.write_csv(&mut w)?;
    w.flush()?;

    // the test split is scored exactly once, after the loop has stopped
    let t = outcome.decision.threshold;
    let test_scores: Vec<f64> = score(&outcome.model, &prepared.scaler, &prepared.test, mode)?
        .iter()
        .map(|r| r.score)
        .collect();
    let (text, test_metrics) = metrics_json(&test_scores, &prepared.test_labels, t, mode)?;
    write_text(&dir.join(METRICS_FILE), &text)?;

    for e in &outcome.audit {
        println!(
            "round {}: {} (tau {:.6}, accuracy {}, recall {})",
            e.round,
            e.action.name(),
            e.threshold,
            fmt_opt(e.accuracy),
            fmt_opt(e.recall)
        );
    }
    if let Some(AssistAction::Stop { meets_targets: false, .. }) = outcome.audit.last().map(|e| &e.action) {
        println!("targets not met within {} rounds", cfg.assist.max_rounds);
    }
    let hp = &outcome.hyperparams;
    println!(
        "final model: learning rate {}, lambda {}, latent width {}, epochs {}",
        hp.learning_rate, hp.lambda, hp.latent_width, hp.epochs
    );
    println!(
        "test split ({} records) at tau {t:.6}: accuracy {}, recall {}, precision {}",
        test_scores.len(),
        fmt_opt(test_metrics.accuracy),
        fmt_opt(test_metrics.recall),
        fmt_opt(test_metrics.precision)
    );
    println!("artifacts written to {}", dir.display());
    Ok(())
}

pub fn analyze(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load(cfg)?;
    let (x, labels) = to_feature_matrix(&data.records, &cfg.features)?;
    let dir = out_dir(cfg);

    let report = feature_importance(&x, &labels, &cfg.forest())?;
    let mut w = create(&dir.join(IMPORTANCE_FILE))?;
    report.write_csv(&mut w)?;
    w.flush()?;

    let corr = correlation_matrix(&x)?;
    let mut w = create(&dir.join(CORRELATION_FILE))?;
    corr.write_csv(&mut w)?;
    w.flush()?;
    for (name, flat) in corr.feature_names.iter().zip(&corr.zero_variance) {
        if *flat {
            log::warn!("feature {name} has zero variance; its correlations are reported as 0");
        }
    }

    println!("feature importance (top 5):");
    for &i in report.ranking.iter().take(5) {
        println!("  {:<24} {:>7.2}", report.feature_names[i], report.importance[i]);
    }

    if cfg.paths.model.is_some() {
        let (model, scaler) = model_and_scaler(cfg)?;
        let (scores, labels) = scores_for(&model, &scaler, &data, cfg.detect.score_mode)?;
        let decision = sweep_threshold(&scores, &labels, &default_grid(&scores)?)?;
        let mut w = create(&dir.join(SWEEP_FILE))?;
        decision.write_csv(&mut w)?;
        w.flush()?;
        let best = decision.selected();
        println!(
            "best threshold {:.6}: accuracy {:.4}, TPR {}",
            best.threshold,
            best.accuracy,
            fmt_opt(best.tpr)
        );
    }
    println!("artifacts written to {}", dir.display());
    Ok(())
}
