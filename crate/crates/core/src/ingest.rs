//! Meter and metadata CSV ingestion.
//!
//! Meter files use the wide layout: the first column holds an hourly
//! timestamp and every further column holds one building's readings in kWh.
//! Cells that are empty, non-numeric or negative become missing readings;
//! rows whose timestamp cannot be read are rejected and reported, never
//! silently dropped.

use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accepted timestamp layouts, tried in order.
const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];
const WRITE_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const HOUR_SECONDS: i64 = 3600;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(NaiveDateTime),
    #[error("irregular grid: step of {step_seconds} s ending at {at}")]
    IrregularGrid { at: NaiveDateTime, step_seconds: i64 },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("schema error{}: {message}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Schema { line: Option<u64>, message: String },
    #[error("building id {0:?} appears more than once")]
    DuplicateBuilding(String),
    #[error("unknown building {0:?}")]
    UnknownBuilding(String),
}

impl IngestError {
    fn schema(line: Option<u64>, message: impl Into<String>) -> Self {
        IngestError::Schema {
            line,
            message: message.into(),
        }
    }
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format(WRITE_FORMAT).to_string()
}

/// Hourly readings for many buildings on a shared, gap-free hourly grid.
///
/// Storage is column-major: one vector of readings per building, `None`
/// marking a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct MeterTable {
    building_ids: Vec<String>,
    timestamps: Vec<NaiveDateTime>,
    columns: Vec<Vec<Option<f64>>>,
}

impl MeterTable {
    pub fn new(
        building_ids: Vec<String>,
        timestamps: Vec<NaiveDateTime>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self, IngestError> {
        if columns.len() != building_ids.len() {
            return Err(IngestError::schema(
                None,
                format!(
                    "{} columns for {} building ids",
                    columns.len(),
                    building_ids.len()
                ),
            ));
        }
        if let Some(col) = columns.iter().find(|c| c.len() != timestamps.len()) {
            return Err(IngestError::schema(
                None,
                format!(
                    "column of length {} on a grid of {} timestamps",
                    col.len(),
                    timestamps.len()
                ),
            ));
        }
        let mut seen = HashSet::new();
        for id in &building_ids {
            if !seen.insert(id.as_str()) {
                return Err(IngestError::DuplicateBuilding(id.clone()));
            }
        }
        check_hourly_grid(&timestamps)?;
        Ok(MeterTable {
            building_ids,
            timestamps,
            columns,
        })
    }

    /// Reassemble a table from per-building series sharing one time grid.
    pub fn from_series(series: Vec<HourlySeries>) -> Result<Self, IngestError> {
        let timestamps = match series.first() {
            Some(s) => s.timestamps.clone(),
            None => Vec::new(),
        };
        let mut ids = Vec::with_capacity(series.len());
        let mut columns = Vec::with_capacity(series.len());
        for s in series {
            if s.timestamps != timestamps {
                return Err(IngestError::schema(
                    None,
                    format!("series {:?} is on a different time grid", s.building_id),
                ));
            }
            ids.push(s.building_id);
            columns.push(s.values);
        }
        MeterTable::new(ids, timestamps, columns)
    }

    pub fn building_ids(&self) -> &[String] {
        &self.building_ids
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn column(&self, index: usize) -> &[Option<f64>] {
        &self.columns[index]
    }

    pub fn value(&self, row: usize, building: usize) -> Option<f64> {
        self.columns[building][row]
    }

    pub fn row_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn building_count(&self) -> usize {
        self.building_ids.len()
    }

    pub fn missing_count(&self) -> usize {
        self.columns
            .iter()
            .map(|c| c.iter().filter(|v| v.is_none()).count())
            .sum()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.building_ids.iter().position(|b| b == id)
    }
}

fn check_hourly_grid(timestamps: &[NaiveDateTime]) -> Result<(), IngestError> {
    for pair in timestamps.windows(2) {
        let step = (pair[1] - pair[0]).num_seconds();
        if step == 0 {
            return Err(IngestError::DuplicateTimestamp(pair[1]));
        }
        if step != HOUR_SECONDS {
            return Err(IngestError::IrregularGrid {
                at: pair[1],
                step_seconds: step,
            });
        }
    }
    Ok(())
}

/// One building's hourly readings.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub building_id: String,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<Option<f64>>,
}

pub fn extract_building(table: &MeterTable, id: &str) -> Result<HourlySeries, IngestError> {
    let index = table
        .index_of(id)
        .ok_or_else(|| IngestError::UnknownBuilding(id.to_string()))?;
    Ok(HourlySeries {
        building_id: id.to_string(),
        timestamps: table.timestamps.clone(),
        values: table.columns[index].clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Bookkeeping for one meter file: every source row is either kept or
/// listed in `rejected`, and every missing cell is attributed to a cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub rejected: Vec<RejectedRow>,
    pub empty_cells: usize,
    pub non_numeric_cells: usize,
    pub negative_cells: usize,
}

impl IngestReport {
    pub fn missing_cells(&self) -> usize {
        self.empty_cells + self.non_numeric_cells + self.negative_cells
    }
}

#[derive(Debug, Clone)]
pub struct MeterParse {
    pub table: MeterTable,
    pub report: IngestReport,
}

enum Cell {
    Value(f64),
    Empty,
    NonNumeric,
    Negative,
}

fn classify_cell(raw: &str) -> Cell {
    let raw = raw.trim();
    if raw.is_empty() {
        return Cell::Empty;
    }
    // f64::from_str rejects thousands separators and underscores already
    match raw.parse::<f64>() {
        Ok(v) if !v.is_finite() => Cell::NonNumeric,
        Ok(v) if v < 0.0 => Cell::Negative,
        Ok(v) => Cell::Value(v),
        Err(_) => Cell::NonNumeric,
    }
}

/// Parse a wide meter CSV (timestamp column followed by one column per building).
pub fn parse_meter_csv<R: Read>(raw: R) -> Result<MeterParse, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(raw);

    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(IngestError::schema(
            Some(1),
            "header needs a timestamp column and at least one building column",
        ));
    }
    let building_ids: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();
    if let Some(pos) = building_ids.iter().position(|id| id.is_empty()) {
        return Err(IngestError::schema(
            Some(1),
            format!("empty building id in header column {}", pos + 2),
        ));
    }
    let mut seen = HashSet::new();
    for id in &building_ids {
        if !seen.insert(id.as_str()) {
            return Err(IngestError::DuplicateBuilding(id.clone()));
        }
    }

    let width = header.len();
    let mut report = IngestReport::default();
    let mut timestamps = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); building_ids.len()];
    let mut record = csv::StringRecord::new();

    while reader.read_record(&mut record)? {
        report.rows_in += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            report.rejected.push(RejectedRow {
                line,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
            continue;
        }
        let Some(ts) = parse_timestamp(&record[0]) else {
            report.rejected.push(RejectedRow {
                line,
                reason: format!("unreadable timestamp {:?}", &record[0]),
            });
            continue;
        };
        timestamps.push(ts);
        for (col, raw) in columns.iter_mut().zip(record.iter().skip(1)) {
            let value = match classify_cell(raw) {
                Cell::Value(v) => Some(v),
                Cell::Empty => {
                    report.empty_cells += 1;
                    None
                }
                Cell::NonNumeric => {
                    report.non_numeric_cells += 1;
                    None
                }
                Cell::Negative => {
                    report.negative_cells += 1;
                    None
                }
            };
            col.push(value);
        }
    }
    report.rows_out = timestamps.len();
    for row in &report.rejected {
        warn!("meter row on line {} rejected: {}", row.line, row.reason);
    }
    if report.negative_cells > 0 {
        warn!(
            "{} negative meter readings treated as missing",
            report.negative_cells
        );
    }
    if timestamps.is_empty() {
        return Err(IngestError::EmptyInput);
    }

    if !timestamps.windows(2).all(|w| w[0] <= w[1]) {
        let mut order: Vec<usize> = (0..timestamps.len()).collect();
        order.sort_by_key(|&i| timestamps[i]);
        timestamps = order.iter().map(|&i| timestamps[i]).collect();
        for col in &mut columns {
            *col = order.iter().map(|&i| col[i]).collect();
        }
    }

    let table = MeterTable::new(building_ids, timestamps, columns)?;
    Ok(MeterParse { table, report })
}

/// Write a table in the same wide layout `parse_meter_csv` reads.
pub fn write_meter_csv<W: Write>(table: &MeterTable, out: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = Vec::with_capacity(table.building_count() + 1);
    header.push("timestamp".to_string());
    header.extend(table.building_ids.iter().cloned());
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (r, ts) in table.timestamps.iter().enumerate() {
        row.clear();
        row.push(format_timestamp(ts));
        for col in &table.columns {
            row.push(col[r].map(|v| v.to_string()).unwrap_or_default());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingMetadata {
    pub building_id: String,
    pub site: String,
    /// Gross floor area in square feet.
    pub floor_area: Option<f64>,
    pub primary_usage: Option<String>,
}

fn find_column(header: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    header
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Parse building metadata. Column names follow the Building Data Genome 2
/// conventions (`site_id`, `sqft`, `primaryspaceusage`) or the plain names
/// `site`, `floor_area`, `primary_usage`.
pub fn parse_metadata_csv<R: Read>(raw: R) -> Result<Vec<BuildingMetadata>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(raw);
    let header = reader.headers()?.clone();
    let id_col = find_column(&header, &["building_id"])
        .ok_or_else(|| IngestError::schema(Some(1), "missing building_id column"))?;
    let site_col = find_column(&header, &["site", "site_id"]);
    let area_col = find_column(&header, &["floor_area", "sqft", "area_sqft"]);
    let usage_col = find_column(&header, &["primary_usage", "primaryspaceusage"]);

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line());
        let field = |col: Option<usize>| {
            col.and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
        };
        let building_id = field(Some(id_col))
            .ok_or_else(|| IngestError::schema(line, "blank building_id"))?
            .to_string();
        if !seen.insert(building_id.clone()) {
            return Err(IngestError::DuplicateBuilding(building_id));
        }
        let floor_area = match field(area_col) {
            None => None,
            Some(raw) => {
                let area: f64 = raw.parse().map_err(|_| {
                    IngestError::schema(line, format!("floor area {raw:?} is not a number"))
                })?;
                if !(area.is_finite() && area > 0.0) {
                    return Err(IngestError::schema(
                        line,
                        format!("floor area {raw} must be positive and finite"),
                    ));
                }
                Some(area)
            }
        };
        records.push(BuildingMetadata {
            building_id,
            site: field(site_col).unwrap_or_default().to_string(),
            floor_area,
            primary_usage: field(usage_col).map(str::to_string),
        });
    }
    Ok(records)
}

pub fn write_metadata_csv<W: Write>(records: &[BuildingMetadata], out: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["building_id", "site", "floor_area", "primary_usage"])?;
    for m in records {
        writer.write_record([
            m.building_id.clone(),
            m.site.clone(),
            m.floor_area.map(|a| a.to_string()).unwrap_or_default(),
            m.primary_usage.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn minimal_table_marks_empty_cell_missing() {
        let csv = "timestamp,A,B\n2016-01-01 00:00,1.0,2.0\n2016-01-01 01:00,3.0,\n";
        let parsed = parse_meter_csv(csv.as_bytes()).unwrap();
        let t = &parsed.table;
        assert_eq!(t.row_count(), 2);
        assert_eq!(t.building_count(), 2);
        assert_eq!(t.value(0, 0), Some(1.0));
        assert_eq!(t.value(1, 0), Some(3.0));
        assert_eq!(t.value(1, 1), None);
        assert_eq!(parsed.report.empty_cells, 1);
    }

    #[test]
    fn duplicate_timestamp_is_an_error() {
        let csv = "timestamp,A\n2016-01-01 00:00,1\n2016-01-01 00:00,2\n";
        match parse_meter_csv(csv.as_bytes()) {
            Err(IngestError::DuplicateTimestamp(t)) => assert_eq!(t, ts("2016-01-01 00:00")),
            other => panic!("expected DuplicateTimestamp, got {other:?}"),
        }
    }

    #[test]
    fn non_hourly_step_is_irregular() {
        let csv = "timestamp,A\n2016-01-01 00:00,1\n2016-01-01 00:30,2\n";
        assert!(matches!(
            parse_meter_csv(csv.as_bytes()),
            Err(IngestError::IrregularGrid { step_seconds: 1800, .. })
        ));
        let gap = "timestamp,A\n2016-01-01 00:00,1\n2016-01-01 02:00,2\n";
        assert!(matches!(
            parse_meter_csv(gap.as_bytes()),
            Err(IngestError::IrregularGrid { step_seconds: 7200, .. })
        ));
    }

    #[test]
    fn header_only_is_empty_input() {
        assert!(matches!(
            parse_meter_csv("timestamp,A,B\n".as_bytes()),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let csv = "timestamp,A\n2016-01-01 01:00:00,2\n2016-01-01 00:00:00,1\n";
        let t = parse_meter_csv(csv.as_bytes()).unwrap().table;
        assert_eq!(t.timestamps()[0], ts("2016-01-01 00:00"));
        assert_eq!(t.column(0), &[Some(1.0), Some(2.0)]);
    }

    #[test]
    fn bad_cells_become_missing_and_are_counted() {
        let csv = "timestamp,A,B,C\n\
                   2016-01-01 00:00,x,\"1,000\",-4\n\
                   2016-01-01 01:00,NaN,1_000,5\n";
        let parsed = parse_meter_csv(csv.as_bytes()).unwrap();
        assert_eq!(parsed.report.non_numeric_cells, 4);
        assert_eq!(parsed.report.negative_cells, 1);
        assert_eq!(parsed.table.missing_count(), 5);
        assert_eq!(parsed.table.value(1, 2), Some(5.0));
    }

    #[test]
    fn rows_with_bad_timestamps_are_reported() {
        let csv = "timestamp,A\n2016-01-01 00:00,1\nnot-a-date,2\n2016-01-01 01:00,3\n2016-01-01 02:00\n";
        let parsed = parse_meter_csv(csv.as_bytes()).unwrap();
        let r = &parsed.report;
        assert_eq!(r.rows_in, 4);
        assert_eq!(r.rows_out, 2);
        assert_eq!(r.rejected.len(), 2);
        assert_eq!(r.rejected[0].line, 3);
        assert_eq!(r.rows_in, r.rows_out + r.rejected.len());
    }

    #[test]
    fn duplicate_building_header_rejected() {
        let csv = "timestamp,A,A\n2016-01-01 00:00,1,2\n";
        assert!(matches!(
            parse_meter_csv(csv.as_bytes()),
            Err(IngestError::DuplicateBuilding(id)) if id == "A"
        ));
    }

    #[test]
    fn extract_known_and_unknown() {
        let csv = "timestamp,A,B\n2016-01-01 00:00,1,2\n2016-01-01 01:00,3,4\n";
        let t = parse_meter_csv(csv.as_bytes()).unwrap().table;
        let a = extract_building(&t, "A").unwrap();
        assert_eq!(a.values.len(), t.row_count());
        assert_eq!(a.values, vec![Some(1.0), Some(3.0)]);
        assert!(matches!(
            extract_building(&t, "Z"),
            Err(IngestError::UnknownBuilding(id)) if id == "Z"
        ));
    }

    #[test]
    fn metadata_rows() {
        let csv = "building_id,site,floor_area,primary_usage\nbldgA,siteX,50000,Office\nbldgB,siteX,,\n";
        let recs = parse_metadata_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].floor_area, Some(50000.0));
        assert_eq!(recs[0].primary_usage.as_deref(), Some("Office"));
        assert_eq!(recs[1].floor_area, None);
        assert_eq!(recs[1].primary_usage, None);
        assert_eq!(recs[1].site, "siteX");
    }

    #[test]
    fn metadata_bdg2_column_names() {
        let csv = "building_id,site_id,primaryspaceusage,sqft\nPanther_office_Hannah,Panther,Office,1234.5\n";
        let recs = parse_metadata_csv(csv.as_bytes()).unwrap();
        assert_eq!(recs[0].site, "Panther");
        assert_eq!(recs[0].floor_area, Some(1234.5));
        assert_eq!(recs[0].primary_usage.as_deref(), Some("Office"));
    }

    #[test]
    fn metadata_negative_area_is_schema_error() {
        let csv = "building_id,site,floor_area,primary_usage\nbldgC,siteX,-10,Office\n";
        assert!(matches!(
            parse_metadata_csv(csv.as_bytes()),
            Err(IngestError::Schema { line: Some(2), .. })
        ));
    }

    #[test]
    fn metadata_requires_building_id() {
        let csv = "id,site\nA,x\n";
        assert!(matches!(
            parse_metadata_csv(csv.as_bytes()),
            Err(IngestError::Schema { .. })
        ));
    }
}
