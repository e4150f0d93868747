//! Reconstruction-error scoring, threshold selection and severity classes.
//!
//! An observation is an anomaly when its score is strictly greater than the
//! threshold `tau`. Severity classes double from there: A covers
//! `(tau, 2tau]`, B `(2tau, 4tau]`, C `(4tau, 8tau]` and D everything above.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionCounts, Label};
use crate::neuralnet::{mae_loss, AutoencoderModel};
use crate::preprocess::{transform, ScalerParams};

/// Number of thresholds in [`default_grid`].
pub const DEFAULT_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// Error of the priority feature alone.
    #[default]
    PriorityFeature,
    /// Mean error over all features.
    Mean,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::PriorityFeature => "priority-feature",
            ScoreMode::Mean => "mean",
        })
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "priority-feature" | "priority" => Ok(ScoreMode::PriorityFeature),
            "mean" => Ok(ScoreMode::Mean),
            other => Err(Error::InvalidArgument(format!(
                "unknown score mode `{other}` (expected priority-feature or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub per_feature_errors: Vec<f64>,
    pub priority_error: f64,
    pub mean_error: f64,
    pub score: f64,
}

impl ReconstructionReport {
    pub fn from_errors(per_feature_errors: Vec<f64>, priority_index: usize, mode: ScoreMode) -> Result<Self> {
        if per_feature_errors.is_empty() {
            return Err(Error::Empty("per-feature errors"));
        }
        let priority_error = *per_feature_errors.get(priority_index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "priority index {priority_index} out of range for {} features",
                per_feature_errors.len()
            ))
        })?;
        let mean_error = per_feature_errors.iter().sum::<f64>() / per_feature_errors.len() as f64;
        let score = match mode {
            ScoreMode::PriorityFeature => priority_error,
            ScoreMode::Mean => mean_error,
        };
        Ok(Self {
            per_feature_errors,
            priority_error,
            mean_error,
            score,
        })
    }

    pub fn verdict(&self, threshold: f64) -> Label {
        classify(self.score, threshold)
    }
}

/// Scale `observations` with `scaler`, reconstruct each one and report its
/// errors. The matrix's priority feature selects the priority error.
pub fn score(
    model: &AutoencoderModel,
    scaler: &ScalerParams,
    observations: &FeatureMatrix,
    mode: ScoreMode,
) -> Result<Vec<ReconstructionReport>> {
    if observations.n_features() != model.input_width() {
        return Err(Error::DimensionMismatch {
            expected: model.input_width(),
            actual: observations.n_features(),
        });
    }
    if observations.is_empty() {
        return Ok(Vec::new());
    }
    score_scaled(model, &transform(observations, scaler)?, mode)
}

/// Like [`score`] for observations that are already scaled.
pub fn score_scaled(model: &AutoencoderModel, scaled: &FeatureMatrix, mode: ScoreMode) -> Result<Vec<ReconstructionReport>> {
    if scaled.n_features() != model.input_width() {
        return Err(Error::DimensionMismatch {
            expected: model.input_width(),
            actual: scaled.n_features(),
        });
    }
    let priority = scaled.priority_feature();
    (0..scaled.n_obs())
        .into_par_iter()
        .map(|i| {
            let x = scaled.observation(i);
            let (errors, _) = mae_loss(x, &model.reconstruct(x)?)?;
            ReconstructionReport::from_errors(errors, priority, mode)
        })
        .collect()
}

/// Anomaly iff `score > threshold`.
pub fn classify(score: f64, threshold: f64) -> Label {
    Label::from_flag(score > threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub accuracy: f64,
    /// Undefined when the labels contain no anomalies.
    pub tpr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// argmax of `(accuracy + tpr) / 2`, ties to the smaller threshold.
    MaxMeanAccuracyTpr,
    /// Fallback when the labels hold a single class.
    AccuracyOnly,
    /// Highest accuracy among points meeting both assist targets.
    AssistTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub threshold: f64,
    pub sweep: Vec<SweepPoint>,
    pub selection_rule: SelectionRule,
    /// Set when the selection could not use the true-positive rate.
    pub warning: Option<String>,
}

impl ThresholdDecision {
    /// The sweep sample at the chosen threshold.
    pub fn selected(&self) -> &SweepPoint {
        self.sweep
            .iter()
            .find(|p| p.threshold == self.threshold)
            .expect("chosen threshold is a sweep point")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["threshold", "accuracy", "tpr"])?;
        for p in &self.sweep {
            w.write_record([
                p.threshold.to_string(),
                p.accuracy.to_string(),
                p.tpr.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Confusion counts for verdicts `score > threshold` against `labels`.
pub fn confusion_at(scores: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (s, l) in scores.iter().zip(labels) {
        c.record(classify(*s, threshold), *l);
    }
    Ok(c)
}

/// Evaluate accuracy and TPR at every grid threshold and pick the one
/// maximising their mean.
///
/// With single-class labels the choice falls back to accuracy alone: ties
/// go to the largest threshold when every label is normal (fewest alarms)
/// and to the smallest when every label is an anomaly.
pub fn sweep_threshold(scores: &[f64], labels: &[Label], grid: &[f64]) -> Result<ThresholdDecision> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if grid.is_empty() {
        return Err(Error::Empty("threshold grid"));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("threshold grid must be finite and strictly increasing".into()));
    }

    let sweep = grid
        .iter()
        .map(|&t| {
            let m = compute_metrics(&confusion_at(scores, labels, t)?)?;
            Ok(SweepPoint {
                threshold: t,
                accuracy: m.accuracy.expect("non-empty confusion has an accuracy"),
                tpr: m.recall,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let positives = labels.iter().filter(|l| l.is_anomaly()).count();
    let single_class = positives == 0 || positives == labels.len();
    let (selection_rule, warning, best) = if single_class {
        let all_normal = positives == 0;
        let mut best = 0;
        for (i, p) in sweep.iter().enumerate() {
            let better = p.accuracy > sweep[best].accuracy || (all_normal && p.accuracy == sweep[best].accuracy);
            if better {
                best = i;
            }
        }
        let msg = format!(
            "labels are all {}; threshold chosen on accuracy alone",
            if all_normal { "normal" } else { "anomalous" }
        );
        log::warn!("{msg}");
        (SelectionRule::AccuracyOnly, Some(msg), best)
    } else {
        let objective = |p: &SweepPoint| (p.accuracy + p.tpr.expect("positives present")) / 2.0;
        let mut best = 0;
        for (i, p) in sweep.iter().enumerate() {
            if objective(p) > objective(&sweep[best]) {
                best = i;
            }
        }
        (SelectionRule::MaxMeanAccuracyTpr, None, best)
    };

    Ok(ThresholdDecision {
        threshold: sweep[best].threshold,
        sweep,
        selection_rule,
        warning,
    })
}

/// `DEFAULT_GRID_POINTS` evenly spaced thresholds from the smallest to the
/// largest score. A constant score list gives a single-point grid.
pub fn default_grid(scores: &[f64]) -> Result<Vec<f64>> {
    evenly_spaced_grid(scores, DEFAULT_GRID_POINTS)
}

pub fn evenly_spaced_grid(scores: &[f64], points: usize) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if points == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi || points == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    grid[points - 1] = hi;
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Normal,
    A,
    B,
    C,
    D,
}

impl Severity {
    pub const CLASSES: [Severity; 4] = [Severity::A, Severity::B, Severity::C, Severity::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Normal => "normal",
            Severity::A => "A",
            Severity::B => "B",
            Severity::C => "C",
            Severity::D => "D",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lower bounds of classes A to D: `tau, 2tau, 4tau, 8tau`.
pub fn severity_bounds(tau: f64) -> [f64; 4] {
    let mut bounds = [tau; 4];
    for k in 1..4 {
        bounds[k] = 2.0 * bounds[k - 1];
    }
    bounds
}

/// Severity class of `score`; each class is open below and closed above.
pub fn severity(score: f64, tau: f64) -> Severity {
    let bounds = severity_bounds(tau);
    let mut class = Severity::Normal;
    for (bound, c) in bounds.iter().zip(Severity::CLASSES) {
        if score > *bound {
            class = c;
        }
    }
    class
}

/// Write `record_id,score,verdict,severity` rows.
pub fn write_detections<W: Write>(writer: W, ids: &[usize], scores: &[f64], tau: f64) -> Result<()> {
    if ids.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: ids.len(),
            actual: scores.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["record_id", "score", "verdict", "severity"])?;
    for (id, s) in ids.iter().zip(scores) {
        w.write_record([
            id.to_string(),
            s.to_string(),
            classify(*s, tau).as_str().to_string(),
            severity(*s, tau).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
