//! Label-assistance loop.
//!
//! Each round trains (or reuses) a model, scores the labelled validation
//! set, sweeps thresholds and checks the result against accuracy and recall
//! targets. The controller then stops, moves the threshold to a grid point
//! that meets both targets, or widens the hyper-parameter ranges, probes
//! the widened space briefly and retrains with the best candidate.
//!
//! Test labels never enter the loop; only validation labels do.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::detector::{
    confusion_at, default_grid, score_scaled, sweep_threshold, ScoreMode, SelectionRule, ThresholdDecision,
};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfusionCounts, Label, MetricSet};
use crate::neuralnet::{init_model, reconstruction_loss, train, AutoencoderModel, LayerPlan, TrainConfig, TrainTrace};

/// Epochs each candidate trains for during an expanded search.
pub const PROBE_EPOCHS: usize = 50;

const SEARCH_FLOOR: f64 = 1e-6;
const SEARCH_CEIL: f64 = 1.0;
const ROUND_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssistTargets {
    pub min_accuracy: f64,
    pub min_recall: f64,
    pub max_rounds: usize,
}

impl Default for AssistTargets {
    fn default() -> Self {
        Self {
            min_accuracy: 0.9,
            min_recall: 0.9,
            max_rounds: 3,
        }
    }
}

impl AssistTargets {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("min_accuracy", self.min_accuracy), ("min_recall", self.min_recall)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidArgument("max_rounds must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether an accuracy/recall pair clears both targets. An undefined
    /// recall only passes a zero recall target.
    pub fn met_by(&self, accuracy: f64, recall: Option<f64>) -> bool {
        accuracy >= self.min_accuracy && recall.map_or(self.min_recall <= 0.0, |r| r >= self.min_recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub learning_rate: (f64, f64),
    pub lambda: (f64, f64),
    pub latent_widths: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: (1e-3, 1e-2),
            lambda: (1e-5, 1e-4),
            latent_widths: vec![4],
            epochs: vec![500],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("learning_rate", self.learning_rate), ("lambda", self.lambda)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} range needs 0 < lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.latent_widths.is_empty() || self.latent_widths.contains(&0) {
            return Err(Error::InvalidArgument("latent widths must be a nonempty list of positive integers".into()));
        }
        if self.epochs.is_empty() {
            return Err(Error::InvalidArgument("epochs set must not be empty".into()));
        }
        Ok(())
    }

    /// Ranges scaled by 10 on each side and clipped to `[1e-6, 1]`.
    pub fn widened(&self) -> SearchSpace {
        let widen = |(lo, hi): (f64, f64)| {
            ((lo / 10.0).clamp(SEARCH_FLOOR, SEARCH_CEIL), (hi * 10.0).clamp(SEARCH_FLOOR, SEARCH_CEIL))
        };
        SearchSpace {
            learning_rate: widen(self.learning_rate),
            lambda: widen(self.lambda),
            latent_widths: self.latent_widths.clone(),
            epochs: self.epochs.clone(),
        }
    }

    /// Longest training budget in the space.
    pub fn max_epochs(&self) -> usize {
        self.epochs.iter().copied().max().unwrap_or(0)
    }

    /// Three learning rates × three lambdas (low end, geometric midpoint,
    /// high end) × every latent width, in that nesting order.
    pub fn candidates(&self) -> Vec<(f64, f64, usize)> {
        let three = |(lo, hi): (f64, f64)| [lo, (lo * hi).sqrt(), hi];
        let mut out = Vec::new();
        for lr in three(self.learning_rate) {
            for lambda in three(self.lambda) {
                for &w in &self.latent_widths {
                    out.push((lr, lambda, w));
                }
            }
        }
        out
    }
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub lambda: f64,
    /// Width of the layers either side of the latent code.
    pub hidden_width: usize,
    pub latent_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Hyperparams {
    pub fn from_config(cfg: &TrainConfig, hidden_width: usize, latent_width: usize) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            lambda: cfg.lambda,
            hidden_width,
            latent_width,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// `n -> hidden -> latent -> hidden -> n`; the hidden width never
    /// drops below the latent width.
    pub fn plan(&self, n_features: usize) -> LayerPlan {
        LayerPlan::symmetric(n_features, &[self.hidden_width.max(self.latent_width), self.latent_width])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    pub meets_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AssistAction {
    Stop { metrics: MetricSet, meets_targets: bool },
    UpdateThreshold { threshold: f64 },
    ExpandSearch { space: SearchSpace },
}

impl AssistAction {
    pub fn name(&self) -> &'static str {
        match self {
            AssistAction::Stop { .. } => "stop",
            AssistAction::UpdateThreshold { .. } => "update-threshold",
            AssistAction::ExpandSearch { .. } => "expand-search",
        }
    }
}

/// Confusion counts and target check at threshold `tau`.
pub fn assess(scores: &[f64], labels: &[Label], tau: f64, targets: &AssistTargets) -> Result<Assessment> {
    if scores.is_empty() {
        return Err(Error::Empty("assist set"));
    }
    let counts = confusion_at(scores, labels, tau)?;
    let metrics = compute_metrics(&counts)?;
    let accuracy = metrics.accuracy.expect("non-empty confusion has an accuracy");
    Ok(Assessment {
        counts,
        metrics,
        meets_targets: targets.met_by(accuracy, metrics.recall),
    })
}

/// Grid point meeting both targets with the highest accuracy; ties go to
/// the smaller threshold.
pub fn best_meeting_threshold(sweep: &ThresholdDecision, targets: &AssistTargets) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in sweep.sweep.iter().filter(|p| targets.met_by(p.accuracy, p.tpr)) {
        if best.is_none_or(|(_, acc)| p.accuracy > acc) {
            best = Some((p.threshold, p.accuracy));
        }
    }
    best.map(|(t, _)| t)
}

/// Stop > UpdateThreshold > ExpandSearch.
pub fn decide(
    assessment: &Assessment,
    sweep: &ThresholdDecision,
    targets: &AssistTargets,
    round: usize,
    space: &SearchSpace,
) -> AssistAction {
    if assessment.meets_targets || round >= targets.max_rounds {
        return AssistAction::Stop {
            metrics: assessment.metrics,
            meets_targets: assessment.meets_targets,
        };
    }
    match best_meeting_threshold(sweep, targets) {
        Some(threshold) => AssistAction::UpdateThreshold { threshold },
        None => AssistAction::ExpandSearch { space: space.widened() },
    }
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub round: usize,
    pub action: AssistAction,
    pub hyperparams: Hyperparams,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
}

/// Line-delimited JSON, one entry per round.
pub fn write_audit_log<W: Write>(mut writer: W, entries: &[AuditEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_audit_log(text: &str) -> Result<Vec<AuditEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Already-scaled inputs of the loop.
pub struct AssistData<'a> {
    /// Normal-only training observations.
    pub normal_train: &'a FeatureMatrix,
    /// Validation observations of both classes.
    pub validation: &'a FeatureMatrix,
    pub validation_labels: &'a [Label],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssistOutcome {
    pub model: AutoencoderModel,
    pub hyperparams: Hyperparams,
    pub decision: ThresholdDecision,
    pub assessment: Assessment,
    pub trace: TrainTrace,
    pub audit: Vec<AuditEntry>,
}

/// Training seed for `round` (1-based); round 1 uses `seed` unchanged.
pub fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_add((round as u64 - 1).wrapping_mul(ROUND_SALT))
}

fn validation_normals(data: &AssistData<'_>) -> FeatureMatrix {
    let idx: Vec<usize> = (0..data.validation_labels.len())
        .filter(|&i| !data.validation_labels[i].is_anomaly())
        .collect();
    data.validation.select(&idx)
}

fn fit(data: &AssistData<'_>, hp: &Hyperparams, val_normals: &FeatureMatrix) -> Result<(AutoencoderModel, TrainTrace)> {
    let model = init_model(&hp.plan(data.normal_train.n_features()), hp.seed)?;
    train(&model, data.normal_train, val_normals, &hp.train_config())
}

/// Train every candidate of `space` for [`PROBE_EPOCHS`] and return the one
/// with the lowest validation loss (first in candidate order on ties).
pub fn probe_search(
    data: &AssistData<'_>,
    space: &SearchSpace,
    base: &Hyperparams,
    seed: u64,
) -> Result<Hyperparams> {
    let val_normals = validation_normals(data);
    let judge = if val_normals.is_empty() { data.normal_train } else { &val_normals };
    let candidates = space.candidates();
    let losses = candidates
        .par_iter()
        .map(|&(learning_rate, lambda, latent_width)| {
            let hp = Hyperparams {
                learning_rate,
                lambda,
                latent_width,
                epochs: PROBE_EPOCHS,
                seed,
                ..*base
            };
            match fit(data, &hp, &val_normals) {
                Ok((model, _)) => reconstruction_loss(&model, judge),
                // a diverging candidate simply loses the comparison
                Err(e) if e.is_numeric() => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l < losses[best] {
            best = i;
        }
    }
    if !losses[best].is_finite() {
        return Err(Error::NonFiniteLoss { epoch: PROBE_EPOCHS, batch: 0 });
    }
    let (learning_rate, lambda, latent_width) = candidates[best];
    Ok(Hyperparams {
        learning_rate,
        lambda,
        latent_width,
        epochs: space.max_epochs(),
        seed,
        ..*base
    })
}

/// Run train → score → sweep → assess → decide until a Stop.
pub fn run_assist_loop(
    data: &AssistData<'_>,
    initial: &Hyperparams,
    space: &SearchSpace,
    targets: &AssistTargets,
    mode: ScoreMode,
) -> Result<AssistOutcome> {
    targets.validate()?;
    space.validate()?;
    if data.validation.n_obs() != data.validation_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: data.validation.n_obs(),
            actual: data.validation_labels.len(),
        });
    }
    if data.validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let val_normals = validation_normals(data);

    let mut hp = *initial;
    let mut space = space.clone();
    let mut audit = Vec::new();
    let mut forced_threshold: Option<f64> = None;
    let mut trained: Option<(AutoencoderModel, TrainTrace)> = None;

    for round in 1..=targets.max_rounds {
        let with_round = |e: Error| Error::Round { round, source: Box::new(e) };
        if trained.is_none() {
            hp.seed = round_seed(initial.seed, round);
            trained = Some(fit(data, &hp, &val_normals).map_err(with_round)?);
        }
        let model = &trained.as_ref().expect("model trained this round").0;

        let scores: Vec<f64> = score_scaled(model, data.validation, mode)
            .map_err(with_round)?
            .iter()
            .map(|r| r.score)
            .collect();
        let grid = default_grid(&scores).map_err(with_round)?;
        let mut decision = sweep_threshold(&scores, data.validation_labels, &grid).map_err(with_round)?;
        if let Some(t) = forced_threshold.take() {
            decision.threshold = t;
            decision.selection_rule = SelectionRule::AssistTargets;
        }
        let assessment = assess(&scores, data.validation_labels, decision.threshold, targets).map_err(with_round)?;
        let action = decide(&assessment, &decision, targets, round, &space);
        log::info!(
            "assist round {round}: tau {:.6}, accuracy {:?}, recall {:?} -> {}",
            decision.threshold,
            assessment.metrics.accuracy,
            assessment.metrics.recall,
            action.name()
        );
        audit.push(AuditEntry {
            round,
            action: action.clone(),
            hyperparams: hp,
            threshold: decision.threshold,
            accuracy: assessment.metrics.accuracy,
            recall: assessment.metrics.recall,
        });

        match action {
            AssistAction::Stop { .. } => {
                let (model, trace) = trained.expect("model trained this round");
                return Ok(AssistOutcome {
                    model,
                    hyperparams: hp,
                    decision,
                    assessment,
                    trace,
                    audit,
                });
            }
            AssistAction::UpdateThreshold { threshold } => {
                // same model, re-assessed at the new threshold next round
                forced_threshold = Some(threshold);
            }
            AssistAction::ExpandSearch { space: widened } => {
                let seed = round_seed(initial.seed, round + 1);
                hp = probe_search(data, &widened, &hp, seed).map_err(with_round)?;
                space = widened;
                trained = None;
            }
        }
    }
    unreachable!("decide stops at max_rounds")
}
