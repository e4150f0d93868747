use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{engineer_features, LabeledRecord, ProfileBook, RawRecord, Rejection};
use crate::error::{Error, Result};

/// Columns of the telemetry table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    ConsumptionHis,
    ConsumptionRate,
    Cluster,
    CurrentHourMeter,
    SiteName,
    EffectiveDateOfVisit,
    PreviousDateOfVisit,
    Months,
    NumberOfDays,
    GeneratorCapacityKva,
    PowerType,
    PreviousHourMeter,
    PreviousFuelQte,
    QteFuelFound,
    QteFuelAdded,
    TotaleQteLeft,
    RunningTime,
}

impl Field {
    pub const ALL: [Field; 17] = [
        Field::ConsumptionHis,
        Field::ConsumptionRate,
        Field::Cluster,
        Field::CurrentHourMeter,
        Field::SiteName,
        Field::EffectiveDateOfVisit,
        Field::PreviousDateOfVisit,
        Field::Months,
        Field::NumberOfDays,
        Field::GeneratorCapacityKva,
        Field::PowerType,
        Field::PreviousHourMeter,
        Field::PreviousFuelQte,
        Field::QteFuelFound,
        Field::QteFuelAdded,
        Field::TotaleQteLeft,
        Field::RunningTime,
    ];

    /// Header name as found in the source table, upper-snake normalized.
    pub fn default_header(self) -> &'static str {
        match self {
            Field::ConsumptionHis => "CONSUMPTION_HIS",
            Field::ConsumptionRate => "CONSUMPTION_RATE",
            Field::Cluster => "CLUSTER",
            Field::CurrentHourMeter => "CURRENT_HOUR_METER_GE1",
            Field::SiteName => "SITE_NAME",
            Field::EffectiveDateOfVisit => "EFFECTIVE_DATE_OF_VISIT",
            Field::PreviousDateOfVisit => "PREVIOUS_DATE_OF_VISIT",
            Field::Months => "MONTHS",
            Field::NumberOfDays => "NUMBER_OF_DAYS",
            Field::GeneratorCapacityKva => "GENERATOR_1_CAPACITY_KVA",
            Field::PowerType => "POWER_TYPE",
            Field::PreviousHourMeter => "PREVIOUS_HOUR_METER_G1",
            Field::PreviousFuelQte => "PREVIOUS_FUEL_QTE",
            Field::QteFuelFound => "QTE_FUEL_FOUND",
            Field::QteFuelAdded => "QTE_FUEL_ADDED",
            Field::TotaleQteLeft => "TOTALE_QTE_LEFT",
            Field::RunningTime => "RUNNING_TIME",
        }
    }
}

/// Upper-case, with every run of non-alphanumerics collapsed to `_`.
/// `GENERATOR_1_CAPACITY_(KVA)` becomes `GENERATOR_1_CAPACITY_KVA`.
pub fn normalize_header(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_uppercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

/// Maps each field to the header that carries it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: HashMap<Field, String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            columns: Field::ALL
                .iter()
                .map(|&f| (f, f.default_header().to_string()))
                .collect(),
        }
    }
}

impl Schema {
    pub fn with_column(mut self, field: Field, header: &str) -> Self {
        self.columns.insert(field, normalize_header(header));
        self
    }

    pub fn header(&self, field: Field) -> &str {
        &self.columns[&field]
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<RawRecord>,
    /// 1-based data-row number of each record.
    pub rows: Vec<usize>,
    pub rejections: Vec<Rejection>,
}

pub fn parse_csv(path: &Path, schema: &Schema) -> Result<ParseOutcome> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    parse_reader(std::fs::File::open(path)?, schema)
}

pub fn parse_reader<R: Read>(reader: R, schema: &Schema) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(normalize_header).collect();
    let mut index = HashMap::new();
    for field in Field::ALL {
        let wanted = schema.header(field);
        let pos = headers
            .iter()
            .position(|h| h == wanted)
            .ok_or_else(|| Error::MissingColumn(wanted.to_string()))?;
        index.insert(field, pos);
    }

    let mut out = ParseOutcome::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cells = RowCells {
            row: &row,
            index: &index,
            schema,
        };
        match cells.parse() {
            Ok(rec) => {
                out.records.push(rec);
                out.rows.push(row_no);
            }
            Err(reason) => out.rejections.push(Rejection { row: row_no, reason }),
        }
    }
    Ok(out)
}

struct RowCells<'a> {
    row: &'a csv::StringRecord,
    index: &'a HashMap<Field, usize>,
    schema: &'a Schema,
}

impl RowCells<'_> {
    fn raw(&self, field: Field) -> std::result::Result<&str, String> {
        let cell = self.row.get(self.index[&field]).map(str::trim).unwrap_or("");
        if cell.is_empty() {
            Err(format!("blank {}", self.schema.header(field)))
        } else {
            Ok(cell)
        }
    }

    fn text(&self, field: Field) -> std::result::Result<String, String> {
        self.raw(field).map(str::to_string)
    }

    fn quantity(&self, field: Field) -> std::result::Result<f64, String> {
        let cell = self.raw(field)?;
        let v: f64 = cell
            .parse()
            .map_err(|_| format!("unparseable {} `{cell}`", self.schema.header(field)))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("{} must be finite and non-negative, got {cell}", self.schema.header(field)));
        }
        Ok(v)
    }

    fn date(&self, field: Field) -> std::result::Result<NaiveDate, String> {
        let cell = self.raw(field)?;
        NaiveDate::parse_from_str(cell, "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(cell, "%d/%m/%Y"))
            .map_err(|_| format!("unparseable {} `{cell}`", self.schema.header(field)))
    }

    fn days(&self) -> std::result::Result<u32, String> {
        let field = Field::NumberOfDays;
        let v = self.quantity(field)?;
        if v.fract() != 0.0 || v > f64::from(u32::MAX) {
            return Err(format!("{} must be a whole number, got {v}", self.schema.header(field)));
        }
        Ok(v as u32)
    }

    fn parse(&self) -> std::result::Result<RawRecord, String> {
        let rec = RawRecord {
            cluster: self.text(Field::Cluster)?,
            site_name: self.text(Field::SiteName)?,
            power_type: self.text(Field::PowerType)?,
            month: self.text(Field::Months)?,
            effective_date_of_visit: self.date(Field::EffectiveDateOfVisit)?,
            previous_date_of_visit: self.date(Field::PreviousDateOfVisit)?,
            number_of_days: self.days()?,
            generator_capacity_kva: self.quantity(Field::GeneratorCapacityKva)?,
            current_hour_meter: self.quantity(Field::CurrentHourMeter)?,
            previous_hour_meter: self.quantity(Field::PreviousHourMeter)?,
            running_time: self.quantity(Field::RunningTime)?,
            consumption_his: self.quantity(Field::ConsumptionHis)?,
            consumption_rate: self.quantity(Field::ConsumptionRate)?,
            previous_fuel_qte: self.quantity(Field::PreviousFuelQte)?,
            qte_fuel_found: self.quantity(Field::QteFuelFound)?,
            qte_fuel_added: self.quantity(Field::QteFuelAdded)?,
            totale_qte_left: self.quantity(Field::TotaleQteLeft)?,
        };
        if rec.generator_capacity_kva <= 0.0 {
            return Err(format!("{} must be positive", self.schema.header(Field::GeneratorCapacityKva)));
        }
        let span = (rec.effective_date_of_visit - rec.previous_date_of_visit).num_days();
        if span != i64::from(rec.number_of_days) {
            return Err(format!(
                "{} is {} but the visit dates are {span} days apart",
                self.schema.header(Field::NumberOfDays),
                rec.number_of_days
            ));
        }
        Ok(rec)
    }
}

/// Engineered and rule-labelled records read from a telemetry CSV.
#[derive(Debug, Clone, Default)]
pub struct LoadedData {
    pub records: Vec<LabeledRecord>,
    /// 1-based data-row number of each record.
    pub rows: Vec<usize>,
    pub rejections: Vec<Rejection>,
}

/// Parse, engineer and label a telemetry file in one pass.
///
/// Labels always come from the rule engine; any `label` column in the file
/// is ignored.
pub fn load_labeled(path: &Path, schema: &Schema, profiles: &ProfileBook) -> Result<LoadedData> {
    let parsed = parse_csv(path, schema)?;
    let (engineered, eng_rejections) = engineer_features(&parsed.records);
    let mut rejections = parsed.rejections;
    let dropped: Vec<usize> = eng_rejections.iter().map(|r| r.row - 1).collect();
    rejections.extend(eng_rejections.into_iter().map(|r| Rejection {
        row: parsed.rows[r.row - 1],
        reason: r.reason,
    }));
    rejections.sort_by_key(|r| r.row);
    let rows = parsed
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, &r)| r)
        .collect();
    let records = engineered.iter().map(|r| profiles.label(r)).collect();
    Ok(LoadedData {
        records,
        rows,
        rejections,
    })
}

fn fmt_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// Input columns followed by the derived columns
/// `running_time_per_day, daily_consumption, label, triggered_rules`.
pub fn write_labeled_csv<W: Write>(writer: W, records: &[LabeledRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = Field::ALL.iter().map(|f| f.default_header()).collect();
    header.extend(["running_time_per_day", "daily_consumption", "label", "triggered_rules"]);
    w.write_record(&header)?;
    for rec in records {
        let r = &rec.raw;
        let mut row: Vec<String> = Field::ALL
            .iter()
            .map(|f| match f {
                Field::ConsumptionHis => r.consumption_his.to_string(),
                Field::ConsumptionRate => r.consumption_rate.to_string(),
                Field::Cluster => r.cluster.clone(),
                Field::CurrentHourMeter => r.current_hour_meter.to_string(),
                Field::SiteName => r.site_name.clone(),
                Field::EffectiveDateOfVisit => fmt_date(r.effective_date_of_visit),
                Field::PreviousDateOfVisit => fmt_date(r.previous_date_of_visit),
                Field::Months => r.month.clone(),
                Field::NumberOfDays => r.number_of_days.to_string(),
                Field::GeneratorCapacityKva => r.generator_capacity_kva.to_string(),
                Field::PowerType => r.power_type.clone(),
                Field::PreviousHourMeter => r.previous_hour_meter.to_string(),
                Field::PreviousFuelQte => r.previous_fuel_qte.to_string(),
                Field::QteFuelFound => r.qte_fuel_found.to_string(),
                Field::QteFuelAdded => r.qte_fuel_added.to_string(),
                Field::TotaleQteLeft => r.totale_qte_left.to_string(),
                Field::RunningTime => r.running_time.to_string(),
            })
            .collect();
        row.push(rec.running_time_per_day.to_string());
        row.push(rec.daily_consumption.to_string());
        row.push(rec.label.as_u8().to_string());
        row.push(rec.triggered_rules.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejections<W: Write>(writer: W, rejections: &[Rejection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "reason"])?;
    for r in rejections {
        w.write_record([r.row.to_string(), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::test_support::raw_record;
    use crate::dataset::engineer_one;

    fn csv_of(records: &[RawRecord]) -> String {
        let labelled: Vec<_> = records.iter().cloned().map(engineer_one).collect();
        let mut buf = Vec::new();
        write_labeled_csv(&mut buf, &labelled).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_normalization() {
        assert_eq!(normalize_header("GENERATOR_1_CAPACITY_(KVA)"), "GENERATOR_1_CAPACITY_KVA");
        assert_eq!(normalize_header(" Site Name "), "SITE_NAME");
        assert_eq!(normalize_header("CURRENT HOUR METER GE1"), "CURRENT_HOUR_METER_GE1");
    }

    #[test]
    fn round_trip_through_csv() {
        let mut r = raw_record();
        r.consumption_his = 41.123456789012345;
        let text = csv_of(&[r.clone(), raw_record()]);
        let out = parse_reader(text.as_bytes(), &Schema::default()).unwrap();
        assert!(out.rejections.is_empty());
        assert_eq!(out.records, vec![r, raw_record()]);
        assert_eq!(out.rows, vec![1, 2]);
    }

    #[test]
    fn header_only_file_is_empty() {
        let text = csv_of(&[]);
        let out = parse_reader(text.as_bytes(), &Schema::default()).unwrap();
        assert!(out.records.is_empty() && out.rejections.is_empty());
    }

    #[test]
    fn blank_running_time_is_rejected_with_row() {
        let text = csv_of(&[raw_record(), raw_record(), raw_record()]);
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        let col = lines[0].split(',').position(|h| h == "RUNNING_TIME").unwrap();
        let mut cells: Vec<&str> = lines[2].split(',').collect();
        cells[col] = "";
        lines[2] = cells.join(",");
        let out = parse_reader(lines.join("\n").as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections[0].row, 2);
        assert!(out.rejections[0].reason.contains("RUNNING_TIME"));
    }

    #[test]
    fn day_count_must_match_dates() {
        let mut r = raw_record();
        r.number_of_days = 5;
        let out = parse_reader(csv_of(&[r]).as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.rejections.len(), 1);
        assert!(out.rejections[0].reason.contains("days apart"));
    }

    #[test]
    fn negative_quantity_is_rejected() {
        let mut r = raw_record();
        r.qte_fuel_added = -3.0;
        let out = parse_reader(csv_of(&[r]).as_bytes(), &Schema::default()).unwrap();
        assert_eq!(out.rejections.len(), 1);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "CLUSTER,SITE_NAME\nx,y\n";
        match parse_reader(text.as_bytes(), &Schema::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "CONSUMPTION_HIS"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn renamed_column_via_schema() {
        let text = csv_of(&[raw_record()]).replacen("RUNNING_TIME,", "HOURS_RUN,", 1);
        assert!(parse_reader(text.as_bytes(), &Schema::default()).is_err());
        let schema = Schema::default().with_column(Field::RunningTime, "hours run");
        let out = parse_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn missing_file() {
        let err = parse_csv(Path::new("/nonexistent/telemetry.csv"), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::FileNotFound(_)));
    }

    #[test]
    fn rejection_csv_layout() {
        let mut buf = Vec::new();
        write_rejections(
            &mut buf,
            &[Rejection {
                row: 2,
                reason: "blank RUNNING_TIME".into(),
            }],
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "row,reason\n2,blank RUNNING_TIME\n");
    }
}
