//! Confusion counts and the scalar detection metrics derived from them.
//!
//! The positive class is "anomaly". Cell names follow the two-class layout
//! used throughout the crate: a *false normal* is an actual anomaly that
//! was predicted normal, a *false anomaly* is an actual normal record that
//! was flagged.
//!
//! Ratios whose denominator is zero are reported as `None` rather than
//! coerced to 0 or 1, and serialize as JSON `null`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class of an observation, used both for ground-truth labels and
/// for detector verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Label {
    #[default]
    Normal,
    Anomaly,
}

impl Label {
    pub fn from_flag(flag: bool) -> Self {
        if flag {
            Label::Anomaly
        } else {
            Label::Normal
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    /// 0 for normal, 1 for anomaly.
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }

    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Label::Normal),
            1 => Some(Label::Anomaly),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomaly => "anomaly",
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// Two-class confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Actual normal, predicted normal.
    #[serde(rename = "tn")]
    pub true_normal: u64,
    /// Actual anomaly, predicted anomaly.
    #[serde(rename = "ta")]
    pub true_anomaly: u64,
    /// Actual anomaly, predicted normal.
    #[serde(rename = "fn")]
    pub false_normal: u64,
    /// Actual normal, predicted anomaly.
    #[serde(rename = "fa")]
    pub false_anomaly: u64,
}

impl ConfusionCounts {
    pub fn new(true_normal: u64, true_anomaly: u64, false_normal: u64, false_anomaly: u64) -> Self {
        Self {
            true_normal,
            true_anomaly,
            false_normal,
            false_anomaly,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_normal + self.true_anomaly + self.false_normal + self.false_anomaly
    }

    /// Number of actual anomalies.
    pub fn positives(&self) -> u64 {
        self.true_anomaly + self.false_normal
    }

    /// Number of actual normal records.
    pub fn negatives(&self) -> u64 {
        self.true_normal + self.false_anomaly
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (actual, predicted) {
            (Label::Normal, Label::Normal) => self.true_normal += 1,
            (Label::Anomaly, Label::Anomaly) => self.true_anomaly += 1,
            (Label::Anomaly, Label::Normal) => self.false_normal += 1,
            (Label::Normal, Label::Anomaly) => self.false_anomaly += 1,
        }
    }
}

/// Tally predictions against labels.
pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &a) in predictions.iter().zip(labels) {
        counts.record(p, a);
    }
    Ok(counts)
}

/// Scalar metrics; `None` marks a 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    /// True positive rate, a.k.a. sensitivity.
    pub recall: Option<f64>,
    pub fpr: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &ConfusionCounts) -> Result<MetricSet> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Empty("confusion counts"));
    }
    let precision = ratio(c.true_anomaly, c.true_anomaly + c.false_anomaly);
    let recall = ratio(c.true_anomaly, c.positives());
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricSet {
        accuracy: ratio(c.true_normal + c.true_anomaly, total),
        precision,
        recall,
        fpr: ratio(c.false_anomaly, c.negatives()),
        specificity: ratio(c.true_normal, c.negatives()),
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() <= tol)
    }

    #[test]
    fn reference_confusion_metrics() {
        let m = compute_metrics(&ConfusionCounts::new(979, 455, 15, 27)).unwrap();
        assert!(close(m.accuracy, 0.9715, 5e-4));
        assert!(close(m.precision, 0.9440, 5e-4));
        assert!(close(m.recall, 0.9681, 5e-4));
        assert!(close(m.specificity, 0.9732, 5e-4));
        assert!(close(m.f1, 0.9559, 5e-4));
    }

    #[test]
    fn perfect_counts() {
        let m = compute_metrics(&ConfusionCounts::new(7, 3, 0, 0)).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.specificity, m.f1] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(m.fpr, Some(0.0));
    }

    #[test]
    fn all_ones_is_one_half_everywhere() {
        let m = compute_metrics(&ConfusionCounts::new(1, 1, 1, 1)).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.fpr, m.specificity, m.f1] {
            assert_eq!(v, Some(0.5));
        }
    }

    #[test]
    fn undefined_ratios_are_none() {
        // no anomalies at all, none predicted
        let m = compute_metrics(&ConfusionCounts::new(5, 0, 0, 0)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.accuracy, Some(1.0));
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"precision\":null"));
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(compute_metrics(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn confusion_all_correct() {
        use Label::*;
        let l = [Normal, Anomaly, Anomaly, Normal];
        let c = confusion(&l, &l).unwrap();
        assert_eq!(c.false_normal, 0);
        assert_eq!(c.false_anomaly, 0);
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn confusion_matches_manual_tally() {
        use Label::*;
        let pred = [Anomaly, Normal, Normal, Anomaly, Anomaly, Normal, Anomaly, Normal, Normal, Anomaly];
        let act = [Anomaly, Anomaly, Normal, Normal, Anomaly, Normal, Normal, Anomaly, Normal, Anomaly];
        // tallied by hand: TA at 0,4,9; FN at 1,7; FA at 3,6; TN at 2,5,8
        let c = confusion(&pred, &act).unwrap();
        assert_eq!(c, ConfusionCounts::new(3, 3, 2, 2));
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(confusion(&[Label::Normal], &[]).is_err());
    }

    proptest! {
        #[test]
        fn metric_identities(tn in 0u64..500, ta in 0u64..500, fnn in 0u64..500, fa in 0u64..500) {
            let c = ConfusionCounts::new(tn, ta, fnn, fa);
            prop_assume!(c.total() > 0);
            let m = compute_metrics(&c).unwrap();
            if let Some(r) = m.recall {
                let miss = fnn as f64 / (ta + fnn) as f64;
                prop_assert!((r + miss - 1.0).abs() < 1e-12);
            }
            if let (Some(s), Some(f)) = (m.specificity, m.fpr) {
                prop_assert!((s + f - 1.0).abs() < 1e-12);
            }
            if let (Some(p), Some(r), Some(f1)) = (m.precision, m.recall, m.f1) {
                prop_assert!(f1 >= p.min(r) - 1e-12 && f1 <= p.max(r) + 1e-12);
            }
            let (pos, neg) = (c.positives() as f64, c.negatives() as f64);
            let weighted = pos * m.recall.unwrap_or(0.0) + neg * m.specificity.unwrap_or(0.0);
            prop_assert!((weighted / (pos + neg) - m.accuracy.unwrap()).abs() < 1e-12);
        }
    }
}
