//! Seeded synthetic telemetry.
//!
//! Normal visits run 2 to 23 h/day and burn at most 0.99× the generator's
//! rated hourly draw. Each anomalous visit violates one rule chosen
//! uniformly, overshooting that rule's boundary by a factor in (1, 3].
//! Every record draws from its own ChaCha stream keyed by its index, so a
//! record's content does not depend on how many records precede it.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{engineer_one, label_record, GeneratorProfile, LabeledRecord, RawRecord, Rule};
use crate::error::{Error, Result};

const SITES: u32 = 400;
const CLUSTERS: u32 = 46;

/// Parameters of [`generate_synthetic`], bundled for configuration files.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub anomaly_rate: f64,
    pub seed: u64,
    pub profiles: Vec<GeneratorProfile>,
}

impl SyntheticConfig {
    pub fn default_profiles() -> Vec<GeneratorProfile> {
        [15.0, 20.0, 30.0, 45.0]
            .into_iter()
            .map(GeneratorProfile::from_capacity)
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<LabeledRecord>> {
        generate_synthetic(self.n, self.anomaly_rate, self.seed, &self.profiles)
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Normal,
    Violates(Rule),
}

/// Generate `n` labelled records, exactly `round(n * anomaly_rate)` of
/// which are anomalous.
pub fn generate_synthetic(
    n: usize,
    anomaly_rate: f64,
    seed: u64,
    profiles: &[GeneratorProfile],
) -> Result<Vec<LabeledRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&anomaly_rate) {
        return Err(Error::InvalidArgument(format!(
            "anomaly rate must lie in [0, 1], got {anomaly_rate}"
        )));
    }
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("at least one generator profile is required".into()));
    }

    let n_anomalies = (n as f64 * anomaly_rate).round() as usize;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut master);
    let mut kinds = vec![Kind::Normal; n];
    for &i in &order[..n_anomalies] {
        let rule = Rule::ALL[master.gen_range(0..Rule::ALL.len())];
        kinds[i] = Kind::Violates(rule);
    }

    let records = kinds
        .par_iter()
        .enumerate()
        .map(|(i, &kind)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            generate_record(&mut rng, kind, profiles)
        })
        .collect();
    Ok(records)
}

fn generate_record(rng: &mut ChaCha8Rng, kind: Kind, profiles: &[GeneratorProfile]) -> LabeledRecord {
    loop {
        let site = rng.gen_range(0..SITES);
        let profile = profiles[site as usize % profiles.len()];
        let raw = draw_raw(rng, kind, site, &profile);
        let rec = label_record(&engineer_one(raw), &profile);
        let accepted = match kind {
            Kind::Normal => rec.triggered_rules.is_empty(),
            Kind::Violates(rule) => rec.triggered_rules.contains(rule),
        };
        if accepted {
            return rec;
        }
    }
}

/// Factor in (1, 3].
fn overshoot(rng: &mut ChaCha8Rng) -> f64 {
    3.0 - 2.0 * rng.gen::<f64>()
}

fn draw_raw(rng: &mut ChaCha8Rng, kind: Kind, site: u32, profile: &GeneratorProfile) -> RawRecord {
    let days: u32 = rng.gen_range(2..=14);
    let offset: u64 = rng.gen_range(u64::from(days)..=395);
    let start = NaiveDate::from_ymd_opt(2017, 9, 1).expect("valid date");
    let effective = start + Days::new(offset);
    let previous = effective - Days::new(u64::from(days));
    let d = f64::from(days);

    let max_hourly = profile.max_hourly_consumption;
    let hours_per_day = rng.gen_range(2.0..=23.0);
    let load = rng.gen_range(0.35..=0.9);
    let noise = rng.gen_range(0.9..=1.1);

    let (running_time, consumption) = match kind {
        Kind::Normal => {
            let rt = hours_per_day * d;
            (rt, load * max_hourly * rt * noise)
        }
        Kind::Violates(Rule::R1) => (0.0, load * max_hourly * hours_per_day * d * noise),
        Kind::Violates(Rule::R2) => {
            let rt = 24.0 * overshoot(rng) * d;
            (rt, load * max_hourly * rt * noise)
        }
        Kind::Violates(Rule::R3) => (hours_per_day * d, profile.daily_cap() * overshoot(rng) * d),
    };
    let consumption_rate = if running_time > 0.0 { consumption / running_time } else { 0.0 };

    let tank = 12.0 * profile.capacity_kva;
    let found = rng.gen_range(0.1..=0.5) * tank;
    let added = rng.gen_range(0.3..=1.0) * tank;
    let previous_hour_meter = rng.gen_range(100.0..20_000.0);

    RawRecord {
        cluster: format!("cluster-{:02}", site % CLUSTERS + 1),
        site_name: format!("site-{:04}", site + 1),
        power_type: "GENERATOR".into(),
        month: effective.format("%B %Y").to_string(),
        effective_date_of_visit: effective,
        previous_date_of_visit: previous,
        number_of_days: days,
        generator_capacity_kva: profile.capacity_kva,
        current_hour_meter: previous_hour_meter + running_time,
        previous_hour_meter,
        running_time,
        consumption_his: consumption,
        consumption_rate,
        previous_fuel_qte: found + consumption,
        qte_fuel_found: found,
        qte_fuel_added: added,
        totale_qte_left: found + added,
    }
}
