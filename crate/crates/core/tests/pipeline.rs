//! File-level round trips through the public API: CSV out and back in,
//! training, and model/scaler persistence.

use std::fs;

use fuelguard::dataset::{
    default_feature_selection, generate_synthetic, load_labeled, to_feature_matrix, write_labeled_csv, ProfileBook,
    Schema, SyntheticConfig,
};
use fuelguard::detector::{score, ScoreMode};
use fuelguard::neuralnet::{init_model, train, AutoencoderModel, LayerPlan, ModelMetadata, TrainConfig};
use fuelguard::preprocess::{prepare, ScalerParams, SplitSpec};
use fuelguard::Error;
use tempfile::TempDir;

#[test]
fn generated_csv_reloads_with_identical_labels() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("data.csv");
    let records = generate_synthetic(500, 0.3, 4, &SyntheticConfig::default_profiles()).unwrap();
    write_labeled_csv(fs::File::create(&path).unwrap(), &records).unwrap();

    let loaded = load_labeled(&path, &Schema::default(), &ProfileBook::new(SyntheticConfig::default_profiles())).unwrap();
    assert!(loaded.rejections.is_empty());
    assert_eq!(loaded.records.len(), 500);
    assert_eq!(loaded.rows, (1..=500).collect::<Vec<_>>());
    for (a, b) in records.iter().zip(&loaded.records) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.triggered_rules, b.triggered_rules);
    }
}

#[test]
fn missing_file_is_reported_as_such() {
    let dir = TempDir::new().unwrap();
    let err = load_labeled(&dir.path().join("nope.csv"), &Schema::default(), &ProfileBook::default()).unwrap_err();
    assert!(matches!(err, Error::FileNotFound(_)), "{err:?}");
}

#[test]
fn persisted_model_scores_like_the_original() {
    let records = generate_synthetic(800, 0.351, 5, &SyntheticConfig::default_profiles()).unwrap();
    let selection = default_feature_selection();
    let prepared = prepare(&records, &selection, &SplitSpec::default()).unwrap();
    assert_eq!(prepared.normal_train.n_features(), 13);

    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let model = init_model(&LayerPlan::default_for(13), 1).unwrap();
    let empty = prepared.validation.select(&[]);
    let (model, trace) = train(&model, &prepared.normal_train, &empty, &cfg).unwrap();
    assert_eq!(trace.epochs(), 20);
    assert!(trace.validation_loss.is_empty());

    let meta = ModelMetadata {
        scaler: Some("scaler.json".into()),
        train_config: Some(cfg),
    };
    let (model_back, meta_back) = AutoencoderModel::from_json(&model.to_json(&meta).unwrap()).unwrap();
    assert_eq!(model_back, model);
    assert_eq!(meta_back, meta);
    let scaler_back = ScalerParams::from_json(&prepared.scaler.to_json().unwrap()).unwrap();
    assert_eq!(scaler_back, prepared.scaler);

    let (x, _) = to_feature_matrix(&records, &selection).unwrap();
    for mode in [ScoreMode::PriorityFeature, ScoreMode::Mean] {
        let before = score(&model, &prepared.scaler, &x, mode).unwrap();
        let after = score(&model_back, &scaler_back, &x, mode).unwrap();
        assert_eq!(before, after);
    }
}
