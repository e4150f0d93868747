//! Generator telemetry records: ingestion, feature engineering, rule-based
//! labelling and synthetic data.
//!
//! A [`RawRecord`] is one refuelling visit. [`engineer_features`] derives the
//! per-day running time and consumption, [`label_record`] applies the three
//! anomaly rules, and [`to_feature_matrix`] turns a record list into the
//! numeric matrix the autoencoder consumes.

mod csvio;
mod matrix;
mod rules;
mod synthetic;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use csvio::{
    load_labeled, parse_csv, write_labeled_csv, write_rejections, Field, LoadedData, ParseOutcome, Schema,
};
pub use matrix::FeatureMatrix;
pub use rules::{label_record, GeneratorProfile, ProfileBook, Rule, TriggeredRules, DEFAULT_LITRES_PER_KVA_HOUR};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};
use crate::metrics::Label;

/// One refuelling visit as recorded in the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub cluster: String,
    pub site_name: String,
    pub power_type: String,
    pub month: String,
    pub effective_date_of_visit: NaiveDate,
    pub previous_date_of_visit: NaiveDate,
    pub number_of_days: u32,
    pub generator_capacity_kva: f64,
    pub current_hour_meter: f64,
    pub previous_hour_meter: f64,
    /// Hours run since the previous visit.
    pub running_time: f64,
    /// Litres consumed since the previous visit.
    pub consumption_his: f64,
    /// Litres per running hour.
    pub consumption_rate: f64,
    pub previous_fuel_qte: f64,
    pub qte_fuel_found: f64,
    pub qte_fuel_added: f64,
    pub totale_qte_left: f64,
}

/// A record with its derived features and rule-engine verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub raw: RawRecord,
    pub running_time_per_day: f64,
    pub daily_consumption: f64,
    pub label: Label,
    pub triggered_rules: TriggeredRules,
}

/// A row dropped during ingestion, with its 1-based position and the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

/// Numeric columns that can feed the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    NumberOfDays,
    GeneratorCapacityKva,
    CurrentHourMeter,
    PreviousHourMeter,
    RunningTime,
    ConsumptionHis,
    ConsumptionRate,
    PreviousFuelQte,
    QteFuelFound,
    QteFuelAdded,
    TotaleQteLeft,
    RunningTimePerDay,
    DailyConsumption,
}

impl Feature {
    pub const ALL: [Feature; 13] = [
        Feature::NumberOfDays,
        Feature::GeneratorCapacityKva,
        Feature::CurrentHourMeter,
        Feature::PreviousHourMeter,
        Feature::RunningTime,
        Feature::ConsumptionHis,
        Feature::ConsumptionRate,
        Feature::PreviousFuelQte,
        Feature::QteFuelFound,
        Feature::QteFuelAdded,
        Feature::TotaleQteLeft,
        Feature::RunningTimePerDay,
        Feature::DailyConsumption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::NumberOfDays => "number_of_days",
            Feature::GeneratorCapacityKva => "generator_capacity_kva",
            Feature::CurrentHourMeter => "current_hour_meter",
            Feature::PreviousHourMeter => "previous_hour_meter",
            Feature::RunningTime => "running_time",
            Feature::ConsumptionHis => "consumption_his",
            Feature::ConsumptionRate => "consumption_rate",
            Feature::PreviousFuelQte => "previous_fuel_qte",
            Feature::QteFuelFound => "qte_fuel_found",
            Feature::QteFuelAdded => "qte_fuel_added",
            Feature::TotaleQteLeft => "totale_qte_left",
            Feature::RunningTimePerDay => "running_time_per_day",
            Feature::DailyConsumption => "daily_consumption",
        }
    }

    /// Case-insensitive lookup by feature name.
    pub fn from_name(name: &str) -> Result<Feature> {
        let wanted = name.trim().to_ascii_lowercase();
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == wanted)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn value(self, rec: &LabeledRecord) -> f64 {
        let r = &rec.raw;
        match self {
            Feature::NumberOfDays => f64::from(r.number_of_days),
            Feature::GeneratorCapacityKva => r.generator_capacity_kva,
            Feature::CurrentHourMeter => r.current_hour_meter,
            Feature::PreviousHourMeter => r.previous_hour_meter,
            Feature::RunningTime => r.running_time,
            Feature::ConsumptionHis => r.consumption_his,
            Feature::ConsumptionRate => r.consumption_rate,
            Feature::PreviousFuelQte => r.previous_fuel_qte,
            Feature::QteFuelFound => r.qte_fuel_found,
            Feature::QteFuelAdded => r.qte_fuel_added,
            Feature::TotaleQteLeft => r.totale_qte_left,
            Feature::RunningTimePerDay => rec.running_time_per_day,
            Feature::DailyConsumption => rec.daily_consumption,
        }
    }
}

/// Feature whose reconstruction error drives priority scoring by default.
pub const DEFAULT_PRIORITY_FEATURE: Feature = Feature::RunningTimePerDay;

pub fn default_feature_selection() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

/// Derive per-day running time and consumption. Labels are left unset
/// (normal, no rules); records spanning zero days are rejected.
pub fn engineer_features(records: &[RawRecord]) -> (Vec<LabeledRecord>, Vec<Rejection>) {
    let mut out = Vec::with_capacity(records.len());
    let mut rejections = Vec::new();
    for (i, raw) in records.iter().enumerate() {
        if raw.number_of_days == 0 {
            rejections.push(Rejection {
                row: i + 1,
                reason: "NUMBER_OF_DAYS is zero".into(),
            });
            continue;
        }
        out.push(engineer_one(raw.clone()));
    }
    (out, rejections)
}

pub(crate) fn engineer_one(raw: RawRecord) -> LabeledRecord {
    let days = f64::from(raw.number_of_days);
    LabeledRecord {
        running_time_per_day: raw.running_time / days,
        daily_consumption: raw.consumption_his / days,
        raw,
        label: Label::Normal,
        triggered_rules: TriggeredRules::default(),
    }
}

/// Assemble the feature matrix (one column per record) and the aligned
/// label vector. The priority feature is `running_time_per_day` when it is
/// selected, otherwise the first feature.
pub fn to_feature_matrix(
    records: &[LabeledRecord],
    feature_selection: &[String],
) -> Result<(FeatureMatrix, Vec<Label>)> {
    let features = feature_selection
        .iter()
        .map(|n| Feature::from_name(n))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = features.iter().map(|f| f.name().to_string()).collect();
    let mut values = Vec::with_capacity(records.len() * features.len());
    for rec in records {
        values.extend(features.iter().map(|f| f.value(rec)));
    }
    let priority = features
        .iter()
        .position(|&f| f == DEFAULT_PRIORITY_FEATURE)
        .unwrap_or(0);
    let matrix = FeatureMatrix::new(names, records.len(), values)?.with_priority_feature(priority)?;
    let labels = records.iter().map(|r| r.label).collect();
    Ok((matrix, labels))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// A plausible normal visit: 10 h/day over 4 days on a 20 kVA set.
    pub fn raw_record() -> RawRecord {
        let eff = NaiveDate::from_ymd_opt(2018, 3, 10).unwrap();
        RawRecord {
            cluster: "cluster-01".into(),
            site_name: "site-0001".into(),
            power_type: "GENERATOR".into(),
            month: "March 2018".into(),
            effective_date_of_visit: eff,
            previous_date_of_visit: eff - chrono::Days::new(4),
            number_of_days: 4,
            generator_capacity_kva: 20.0,
            current_hour_meter: 1040.0,
            previous_hour_meter: 1000.0,
            running_time: 40.0,
            consumption_his: 40.0,
            consumption_rate: 1.0,
            previous_fuel_qte: 140.0,
            qte_fuel_found: 100.0,
            qte_fuel_added: 200.0,
            totale_qte_left: 300.0,
        }
    }
}
