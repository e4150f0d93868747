//! Min-max scaling, train/validation/test splitting and anomaly stripping.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{to_feature_matrix, FeatureMatrix, LabeledRecord};
use crate::error::{Error, Result};
use crate::metrics::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

/// Per-feature extrema fitted on training data.
///
/// Serializes as a JSON object keyed by feature name, in feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalerParams {
    ranges: IndexMap<String, FeatureRange>,
}

impl ScalerParams {
    pub fn new(feature_names: &[String], min: &[f64], max: &[f64]) -> Result<Self> {
        if min.len() != feature_names.len() || max.len() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_names.len(),
                actual: min.len().min(max.len()),
            });
        }
        let mut ranges = IndexMap::new();
        for ((name, &lo), &hi) in feature_names.iter().zip(min).zip(max) {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("bad range [{lo}, {hi}] for `{name}`")));
            }
            ranges.insert(name.clone(), FeatureRange { min: lo, max: hi });
        }
        Ok(Self { ranges })
    }

    pub fn n_features(&self) -> usize {
        self.ranges.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.ranges.keys().cloned().collect()
    }

    pub fn min(&self) -> Vec<f64> {
        self.ranges.values().map(|r| r.min).collect()
    }

    pub fn max(&self) -> Vec<f64> {
        self.ranges.values().map(|r| r.max).collect()
    }

    pub fn range(&self, index: usize) -> FeatureRange {
        self.ranges[index]
    }

    fn check(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_features() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.n_features(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ScalerParams = serde_json::from_str(s)?;
        for (name, r) in &p.ranges {
            if r.min > r.max {
                return Err(Error::InvalidArgument(format!("min exceeds max for `{name}`")));
            }
        }
        Ok(p)
    }
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::Empty("training matrix"));
    }
    let n = train.n_features();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for obs in train.observations() {
        for (j, &v) in obs.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    ScalerParams::new(train.feature_names(), &min, &max)
}

/// Map each entry to `(x - min) / (max - min)`. Degenerate features
/// (`max == min`) map to 0. Values outside the fitted range are kept as is.
pub fn transform(x: &FeatureMatrix, p: &ScalerParams) -> Result<FeatureMatrix> {
    p.check(x)?;
    let ranges: Vec<FeatureRange> = p.ranges.values().copied().collect();
    let mut values = x.values().to_vec();
    for obs in values.chunks_exact_mut(ranges.len()) {
        for (v, r) in obs.iter_mut().zip(&ranges) {
            let span = r.max - r.min;
            *v = if span > 0.0 { (*v - r.min) / span } else { 0.0 };
        }
    }
    Ok(x.with_values(values))
}

/// Undo [`transform`]; degenerate features come back as their minimum.
pub fn inverse_transform(x_scaled: &FeatureMatrix, p: &ScalerParams) -> Result<FeatureMatrix> {
    p.check(x_scaled)?;
    let ranges: Vec<FeatureRange> = p.ranges.values().copied().collect();
    let mut values = x_scaled.values().to_vec();
    for obs in values.chunks_exact_mut(ranges.len()) {
        for (v, r) in obs.iter_mut().zip(&ranges) {
            *v = r.min + *v * (r.max - r.min);
        }
    }
    Ok(x_scaled.with_values(values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction_of_train: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            validation_fraction_of_train: 0.10,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Index partition produced by [`split`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn pick<T: Clone>(indices: &[usize], items: &[T]) -> Vec<T> {
        indices.iter().map(|&i| items[i].clone()).collect()
    }
}

/// ChaCha stream reserved for split shuffling. Without it a split and a
/// synthetic set drawn with the same seed would share one permutation, and
/// every generated anomaly would land in the training portion.
const SPLIT_STREAM: u64 = 0x5350_4c49_5400_0000;

// Guards against 0.1 * 10 landing a hair under 1.
fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Partition `m` items: the test set is cut first, then the validation set
/// is carved out of what remains.
pub fn split(m: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    if m < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 records to split, got {m}")));
    }
    for (name, f) in [
        ("train_fraction", spec.train_fraction),
        ("validation_fraction_of_train", spec.validation_fraction_of_train),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    if spec.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(SPLIT_STREAM);
        order.shuffle(&mut rng);
    }
    let n_test = floor_count(m as f64 * (1.0 - spec.train_fraction));
    let test = order.split_off(m - n_test);
    let n_val = floor_count(order.len() as f64 * spec.validation_fraction_of_train);
    let validation = order.split_off(order.len() - n_val);
    Ok(SplitIndices {
        train: order,
        validation,
        test,
    })
}

/// Keep only the normal training records; also returns how many were removed.
pub fn strip_anomalies(train: &[LabeledRecord]) -> (Vec<LabeledRecord>, usize) {
    let kept: Vec<LabeledRecord> = train.iter().filter(|r| r.label == Label::Normal).cloned().collect();
    let removed = train.len() - kept.len();
    (kept, removed)
}

/// Everything the training and assist stages need from one labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub split: SplitIndices,
    /// Fitted on the normal training observations only.
    pub scaler: ScalerParams,
    /// Scaled normal training observations.
    pub normal_train: FeatureMatrix,
    /// Anomalies removed from the training part.
    pub removed: usize,
    /// Scaled validation observations, both classes.
    pub validation: FeatureMatrix,
    pub validation_labels: Vec<Label>,
    /// Unscaled test observations.
    pub test: FeatureMatrix,
    pub test_labels: Vec<Label>,
}

/// Split, drop training anomalies, fit the scaler and scale.
pub fn prepare(records: &[LabeledRecord], feature_selection: &[String], spec: &SplitSpec) -> Result<PreparedData> {
    let split = split(records.len(), spec)?;
    let (normal, removed) = strip_anomalies(&SplitIndices::pick(&split.train, records));
    let (normal_raw, _) = to_feature_matrix(&normal, feature_selection)?;
    let scaler = fit_scaler(&normal_raw)?;
    let normal_train = transform(&normal_raw, &scaler)?;
    let (validation_raw, validation_labels) =
        to_feature_matrix(&SplitIndices::pick(&split.validation, records), feature_selection)?;
    let validation = transform(&validation_raw, &scaler)?;
    let (test, test_labels) = to_feature_matrix(&SplitIndices::pick(&split.test, records), feature_selection)?;
    Ok(PreparedData {
        split,
        scaler,
        normal_train,
        removed,
        validation,
        validation_labels,
        test,
        test_labels,
    })
}
