use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LabeledRecord;
use crate::error::{Error, Result};
use crate::metrics::Label;

/// Typical diesel genset draw at full load, litres per kVA-hour.
pub const DEFAULT_LITRES_PER_KVA_HOUR: f64 = 0.08;

/// The three anomaly indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    /// Fuel consumed while the generator did not run.
    R1,
    /// More than 24 running hours per day.
    R2,
    /// Daily consumption above what the generator can burn in 24 h.
    R3,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::R1, Rule::R2, Rule::R3];

    fn bit(self) -> u8 {
        match self {
            Rule::R1 => 1,
            Rule::R2 => 2,
            Rule::R3 => 4,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
        })
    }
}

/// Set of rules a record violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TriggeredRules(u8);

impl TriggeredRules {
    pub fn insert(&mut self, rule: Rule) {
        self.0 |= rule.bit();
    }

    pub fn contains(self, rule: Rule) -> bool {
        self.0 & rule.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Rule> {
        Rule::ALL.into_iter().filter(move |r| self.contains(*r))
    }
}

impl FromIterator<Rule> for TriggeredRules {
    fn from_iter<I: IntoIterator<Item = Rule>>(iter: I) -> Self {
        let mut set = TriggeredRules::default();
        for r in iter {
            set.insert(r);
        }
        set
    }
}

/// Semicolon separated, e.g. `R1;R3`; empty when no rule fired.
impl fmt::Display for TriggeredRules {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for TriggeredRules {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "R1" => Ok(Rule::R1),
                "R2" => Ok(Rule::R2),
                "R3" => Ok(Rule::R3),
                other => Err(Error::InvalidArgument(format!("unknown rule `{other}`"))),
            })
            .collect()
    }
}

impl Serialize for TriggeredRules {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TriggeredRules {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Consumption envelope of one generator model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub capacity_kva: f64,
    /// Litres per hour at full load.
    pub max_hourly_consumption: f64,
}

impl GeneratorProfile {
    pub fn new(capacity_kva: f64, max_hourly_consumption: f64) -> Result<Self> {
        if !(capacity_kva > 0.0 && capacity_kva.is_finite()) {
            return Err(Error::InvalidArgument(format!("capacity must be positive, got {capacity_kva}")));
        }
        if !(max_hourly_consumption > 0.0 && max_hourly_consumption.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "max hourly consumption must be positive, got {max_hourly_consumption}"
            )));
        }
        Ok(Self {
            capacity_kva,
            max_hourly_consumption,
        })
    }

    /// Profile with the default draw of 0.08 L per kVA-hour.
    pub fn from_capacity(capacity_kva: f64) -> Self {
        Self {
            capacity_kva,
            max_hourly_consumption: DEFAULT_LITRES_PER_KVA_HOUR * capacity_kva,
        }
    }

    /// Litres per day above which rule R3 fires.
    pub fn daily_cap(&self) -> f64 {
        24.0 * self.max_hourly_consumption
    }
}

/// Resolves the profile for a record by generator capacity. Capacities
/// without an explicit profile fall back to [`GeneratorProfile::from_capacity`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileBook {
    profiles: Vec<GeneratorProfile>,
}

impl ProfileBook {
    pub fn new(profiles: Vec<GeneratorProfile>) -> Self {
        Self { profiles }
    }

    pub fn profiles(&self) -> &[GeneratorProfile] {
        &self.profiles
    }

    pub fn profile_for(&self, capacity_kva: f64) -> GeneratorProfile {
        self.profiles
            .iter()
            .find(|p| p.capacity_kva == capacity_kva)
            .copied()
            .unwrap_or_else(|| GeneratorProfile::from_capacity(capacity_kva))
    }

    pub fn label(&self, rec: &LabeledRecord) -> LabeledRecord {
        label_record(rec, &self.profile_for(rec.raw.generator_capacity_kva))
    }
}

/// Apply the three rules and set the label accordingly.
pub fn label_record(rec: &LabeledRecord, profile: &GeneratorProfile) -> LabeledRecord {
    let mut rules = TriggeredRules::default();
    if rec.raw.running_time == 0.0 && rec.raw.consumption_his > 0.0 {
        rules.insert(Rule::R1);
    }
    if rec.running_time_per_day > 24.0 {
        rules.insert(Rule::R2);
    }
    if rec.daily_consumption > profile.daily_cap() {
        rules.insert(Rule::R3);
    }
    LabeledRecord {
        label: Label::from_flag(!rules.is_empty()),
        triggered_rules: rules,
        ..rec.clone()
    }
}
