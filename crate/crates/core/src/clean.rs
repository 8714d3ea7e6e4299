//! Integrity rules, target derivation and descriptive statistics.

use std::collections::{BTreeMap, HashSet};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::dictionary::DataDictionary;
use crate::ingest::join::JoinedRecord;
use crate::ingest::perimeter::{csv_error, line_of, normalize_name, parse_code, Columns, CsvError};

/// California bounding box, degrees.
pub const LAT_RANGE: (f64, f64) = (32.0, 43.0);
pub const LON_RANGE: (f64, f64) = (-125.0, -114.0);

#[derive(Debug, Error, PartialEq)]
pub enum CleanError {
    #[error("unparseable date {0:?}")]
    UnparseableDate(String),
    #[error("containment date precedes alarm date")]
    NegativeDuration,
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// Accepts `YYYY-MM-DD` or `YYYY/MM/DD`, optionally followed by a time
/// suffix introduced by `T` or a space, which is discarded.
pub fn parse_date(text: &str) -> Result<NaiveDate, CleanError> {
    let fail = || CleanError::UnparseableDate(text.to_string());
    let t = text.trim();
    let b = t.as_bytes();
    if b.len() < 10 {
        return Err(fail());
    }
    let sep = b[4];
    if !(sep == b'-' || sep == b'/') || b[7] != sep {
        return Err(fail());
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r.clone()].iter().all(u8::is_ascii_digit).then(|| t[r].parse().ok()).flatten()
    };
    let (Some(y), Some(m), Some(d)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return Err(fail());
    };
    if b.len() > 10 && !(b[10] == b'T' || b[10] == b' ') {
        return Err(fail());
    }
    NaiveDate::from_ymd_opt(y as i32, m, d).ok_or_else(fail)
}

/// Whole calendar days from alarm to containment and `ln(1 + days)`.
pub fn derive_target(alarm: NaiveDate, cont: NaiveDate) -> Result<(u32, f64), CleanError> {
    let days = (cont - alarm).num_days();
    if days < 0 {
        return Err(CleanError::NegativeDuration);
    }
    let days = days as u32;
    Ok((days, (days as f64).ln_1p()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub year_digitized: i32,
    pub irwin_id: Option<String>,
    pub fire_name: String,
    pub alarm_date: NaiveDate,
    pub cont_date: NaiveDate,
    pub cause_code: Option<i64>,
    pub agency_code: Option<String>,
    pub unit_id: Option<String>,
    pub c_method_code: Option<i64>,
    pub objective_code: Option<i64>,
    pub gis_acres: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub containment_days: u32,
    pub log_cont_days: f64,
}

impl FireRecord {
    pub fn log_acres(&self) -> f64 {
        self.gis_acres.ln_1p()
    }

    pub fn in_bounds(&self) -> bool {
        in_bounds(self.latitude, self.longitude)
    }

    fn dedup_key(&self) -> String {
        match &self.irwin_id {
            Some(id) => format!("id:{id}"),
            None => format!("name:{}|{}|{}", self.year_digitized, normalize_name(&self.fire_name), self.alarm_date),
        }
    }
}

fn in_bounds(lat: f64, lon: f64) -> bool {
    (LAT_RANGE.0..=LAT_RANGE.1).contains(&lat) && (LON_RANGE.0..=LON_RANGE.1).contains(&lon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingGeometry,
    UnparseableDate,
    ContBeforeAlarm,
    MissingAcres,
    DuplicateKey,
    OutOfBounds,
}

impl DropReason {
    pub const ALL: [DropReason; 6] = [
        DropReason::MissingGeometry,
        DropReason::UnparseableDate,
        DropReason::ContBeforeAlarm,
        DropReason::MissingAcres,
        DropReason::DuplicateKey,
        DropReason::OutOfBounds,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl CleanReport {
    fn new(rows_in: usize) -> Self {
        Self { rows_in, rows_out: 0, dropped_by_reason: DropReason::ALL.into_iter().map(|r| (r, 0)).collect() }
    }

    pub fn dropped(&self, reason: DropReason) -> usize {
        self.dropped_by_reason.get(&reason).copied().unwrap_or(0)
    }

    pub fn total_dropped(&self) -> usize {
        self.dropped_by_reason.values().sum()
    }

    fn drop(&mut self, reason: DropReason) {
        *self.dropped_by_reason.entry(reason).or_insert(0) += 1;
    }

    /// Fold records lost in the geometry join into `missing_geometry`.
    pub fn with_join_drops(mut self, join_dropped: usize) -> Self {
        self.rows_in += join_dropped;
        *self.dropped_by_reason.entry(DropReason::MissingGeometry).or_insert(0) += join_dropped;
        self
    }
}

/// Apply, in order: geometry presence, date parsing, chronology, acreage
/// presence, duplicate removal (first occurrence kept) and the California
/// bounds check. Output order follows input order.
pub fn clean_records(rows: &[JoinedRecord]) -> (Vec<FireRecord>, CleanReport) {
    let mut report = CleanReport::new(rows.len());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rows {
        let r = &row.record;
        if !(row.latitude.is_finite() && row.longitude.is_finite()) {
            report.drop(DropReason::MissingGeometry);
            continue;
        }
        let (Ok(alarm), Ok(cont)) = (parse_date(&r.alarm_date_text), parse_date(&r.cont_date_text)) else {
            report.drop(DropReason::UnparseableDate);
            continue;
        };
        let Ok((containment_days, log_cont_days)) = derive_target(alarm, cont) else {
            report.drop(DropReason::ContBeforeAlarm);
            continue;
        };
        let Some(gis_acres) = r.gis_acres else {
            report.drop(DropReason::MissingAcres);
            continue;
        };
        let rec = FireRecord {
            year_digitized: r.year_digitized,
            irwin_id: r.irwin_id.clone(),
            fire_name: r.fire_name.clone(),
            alarm_date: alarm,
            cont_date: cont,
            cause_code: r.cause_code,
            agency_code: r.agency_code.clone(),
            unit_id: r.unit_id.clone(),
            c_method_code: r.c_method_code,
            objective_code: r.objective_code,
            gis_acres,
            latitude: row.latitude,
            longitude: row.longitude,
            containment_days,
            log_cont_days,
        };
        if !seen.insert(rec.dedup_key()) {
            report.drop(DropReason::DuplicateKey);
            continue;
        }
        if !rec.in_bounds() {
            report.drop(DropReason::OutOfBounds);
            continue;
        }
        out.push(rec);
    }
    report.rows_out = out.len();
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub variable: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

impl StatsTable {
    pub fn row(&self, variable: &str) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.variable == variable)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable,count,mean,std,min,p25,p50,p75,max\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.variable, r.count, r.mean, r.std, r.min, r.p25, r.p50, r.p75, r.max
            ));
        }
        s
    }
}

/// Linear interpolation between order statistics of a sorted slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Sample (n-1) standard deviation; a single observation gives 0.
pub fn summarize(variable: &str, values: &[f64]) -> Result<StatsRow, CleanError> {
    if values.is_empty() {
        return Err(CleanError::EmptyDataset);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(StatsRow {
        variable: variable.to_string(),
        count: n,
        mean,
        std,
        min: sorted[0],
        p25: percentile_sorted(&sorted, 0.25),
        p50: percentile_sorted(&sorted, 0.5),
        p75: percentile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

pub fn descriptive_stats(records: &[FireRecord]) -> Result<StatsTable, CleanError> {
    let col = |f: fn(&FireRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    Ok(StatsTable {
        rows: vec![
            summarize("containment_days", &col(|r| r.containment_days as f64))?,
            summarize("log_cont_days", &col(|r| r.log_cont_days))?,
            summarize("gis_acres", &col(|r| r.gis_acres))?,
            summarize("log_acres", &col(FireRecord::log_acres))?,
        ],
    })
}

/// Column order of the cleaned dataset CSV.
pub const CLEAN_COLUMNS: [&str; 15] = [
    "YEAR_",
    "IRWINID",
    "FIRE_NAME",
    "ALARM_DATE",
    "CONT_DATE",
    "CAUSE",
    "AGENCY",
    "UNIT_ID",
    "C_METHOD",
    "OBJECTIVE",
    "GIS_ACRES",
    "LATITUDE",
    "LONGITUDE",
    "CONTAINMENT_DAYS",
    "LOG_CONT_DAYS",
];

/// Decoded label columns appended when a dictionary is supplied.
pub const LABEL_COLUMNS: [&str; 4] = ["CAUSE_LABEL", "AGENCY_LABEL", "C_METHOD_LABEL", "OBJECTIVE_LABEL"];

pub fn write_clean_csv(records: &[FireRecord], dictionary: Option<&DataDictionary>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = CLEAN_COLUMNS.to_vec();
    if dictionary.is_some() {
        header.extend(LABEL_COLUMNS);
    }
    w.write_record(&header).expect("in-memory write");
    let num = |v: Option<i64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.year_digitized.to_string(),
            r.irwin_id.clone().unwrap_or_default(),
            r.fire_name.clone(),
            r.alarm_date.to_string(),
            r.cont_date.to_string(),
            num(r.cause_code),
            r.agency_code.clone().unwrap_or_default(),
            r.unit_id.clone().unwrap_or_default(),
            num(r.c_method_code),
            num(r.objective_code),
            r.gis_acres.to_string(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            r.containment_days.to_string(),
            r.log_cont_days.to_string(),
        ];
        if let Some(d) = dictionary {
            row.push(d.decode_cause(r.cause_code));
            row.push(d.decode_agency(r.agency_code.as_deref()));
            row.push(d.decode_c_method(r.c_method_code));
            row.push(d.decode_objective(r.objective_code));
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Read a cleaned dataset. The target is recomputed from the two dates;
/// rows violating the cleaning invariants are rejected.
pub fn read_clean_csv(bytes: &[u8]) -> Result<Vec<FireRecord>, CleanError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = Columns::new(&headers);
    let idx: Vec<usize> = CLEAN_COLUMNS[..13].iter().map(|c| cols.require(c)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = line_of(&row);
        let bad = |m: String| CleanError::Csv(CsvError::MalformedCsv { line, message: m });
        let cell = |k: usize| row[idx[k]].trim();
        let text = |k: usize| (!cell(k).is_empty()).then(|| cell(k).to_string());
        let code = |k: usize| parse_code(cell(k)).transpose().map_err(|m| bad(format!("{}: {m}", CLEAN_COLUMNS[k])));
        let real = |k: usize| -> Result<f64, CleanError> {
            cell(k).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("{}: {:?}", CLEAN_COLUMNS[k], cell(k))))
        };
        let alarm = parse_date(cell(3))?;
        let cont = parse_date(cell(4))?;
        let (containment_days, log_cont_days) = derive_target(alarm, cont)?;
        let gis_acres = real(10)?;
        if gis_acres < 0.0 {
            return Err(bad("GIS_ACRES negative".into()));
        }
        out.push(FireRecord {
            year_digitized: code(0)?.ok_or_else(|| bad("YEAR_ empty".into()))? as i32,
            irwin_id: text(1),
            fire_name: text(2).unwrap_or_default(),
            alarm_date: alarm,
            cont_date: cont,
            cause_code: code(5)?,
            agency_code: text(6),
            unit_id: text(7),
            c_method_code: code(8)?,
            objective_code: code(9)?,
            gis_acres,
            latitude: real(11)?,
            longitude: real(12)?,
            containment_days,
            log_cont_days,
        });
    }
    Ok(out)
}

/// Calendar month (1..=12) and ordinal day (1..=366) of a date.
pub fn seasonal(date: NaiveDate) -> (u32, u32) {
    (date.month(), date.ordinal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::perimeter::RawFireRecord;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    pub(crate) fn joined(id: Option<&str>, alarm: &str, cont: &str) -> JoinedRecord {
        JoinedRecord {
            record: RawFireRecord {
                year_digitized: 2020,
                irwin_id: id.map(str::to_string),
                fire_name: "TEST".into(),
                alarm_date_text: alarm.into(),
                cont_date_text: cont.into(),
                cause_code: Some(1),
                agency_code: Some("CDF".into()),
                unit_id: None,
                c_method_code: Some(1),
                objective_code: Some(1),
                gis_acres: Some(10.0),
            },
            latitude: 37.0,
            longitude: -120.0,
        }
    }

    #[test]
    fn date_formats() {
        assert_eq!(parse_date("2018-11-08T06:33:00").unwrap(), d(2018, 11, 8));
        assert_eq!(parse_date("1899/09/15").unwrap(), d(1899, 9, 15));
        assert_eq!(parse_date("2018/11/08 00:00:00+00").unwrap(), d(2018, 11, 8));
        for bad in ["Nov 8 2018", "18-11-08", "2018-13-01", "2018-11-08X", "2018-11/08", ""] {
            assert_eq!(parse_date(bad), Err(CleanError::UnparseableDate(bad.into())), "{bad}");
        }
    }

    #[test]
    fn targets() {
        assert_eq!(derive_target(d(2018, 1, 1), d(2018, 1, 1)).unwrap(), (0, 0.0));
        let (days, log) = derive_target(d(2018, 1, 1), d(2018, 1, 5)).unwrap();
        assert_eq!(days, 4);
        assert!((log - 5f64.ln()).abs() < 1e-15);
        let (days, log) = derive_target(d(2018, 1, 1), d(2018, 1, 1) + chrono::Days::new(638)).unwrap();
        assert_eq!(days, 638);
        // ln(639) rounds to the 6.45 published for the longest FRAP fire.
        assert!((log - 6.4599).abs() < 1e-4);
        assert_eq!(derive_target(d(2018, 1, 2), d(2018, 1, 1)), Err(CleanError::NegativeDuration));
    }

    #[test]
    fn chronology_and_duplicates() {
        let rows = vec![
            joined(Some("A"), "2020-01-05", "2020-01-01"),
            joined(Some("B"), "2020-01-01", "2020-01-03"),
            joined(Some("B"), "2020-02-01", "2020-02-03"),
        ];
        let (out, rep) = clean_records(&rows);
        assert_eq!(out.len(), 1);
        assert_eq!(rep.dropped(DropReason::ContBeforeAlarm), 1);
        assert_eq!(rep.dropped(DropReason::DuplicateKey), 1);
        assert_eq!(out[0].alarm_date, d(2020, 1, 1));
        assert_eq!(rep.rows_in, rep.rows_out + rep.total_dropped());
    }

    #[test]
    fn bounds_and_missing_values() {
        let mut oob = joined(Some("A"), "2020-01-01", "2020-01-01");
        oob.latitude = 0.5;
        let mut nogeo = joined(Some("B"), "2020-01-01", "2020-01-01");
        nogeo.longitude = f64::NAN;
        let mut noacres = joined(Some("C"), "2020-01-01", "2020-01-01");
        noacres.record.gis_acres = None;
        let (out, rep) = clean_records(&[oob, nogeo, noacres]);
        assert!(out.is_empty());
        assert_eq!(rep.dropped(DropReason::OutOfBounds), 1);
        assert_eq!(rep.dropped(DropReason::MissingGeometry), 1);
        assert_eq!(rep.dropped(DropReason::MissingAcres), 1);
    }

    #[test]
    fn name_key_used_without_irwin() {
        let a = joined(None, "2020-01-01", "2020-01-02");
        let mut b = joined(None, "2020-01-01", "2020-01-09");
        b.record.fire_name = " test ".into();
        let c = joined(None, "2020-03-01", "2020-03-02");
        let (out, rep) = clean_records(&[a, b, c]);
        assert_eq!(out.len(), 2);
        assert_eq!(rep.dropped(DropReason::DuplicateKey), 1);
    }

    #[test]
    fn stats_small_cases() {
        let one = summarize("x", &[5.0]).unwrap();
        assert_eq!((one.mean, one.std, one.min, one.p25, one.p50, one.p75, one.max), (5.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0));
        let s = summarize("x", &[3.0, 0.0, 4.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.p50, 2.0);
        assert_eq!((s.p25, s.p75), (1.0, 3.0));
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(summarize("x", &[]), Err(CleanError::EmptyDataset));
        assert_eq!(percentile_sorted(&[0.0, 10.0], 0.25), 2.5);
    }

    #[test]
    fn clean_csv_round_trip() {
        let rows = vec![joined(Some("A"), "2020-01-01", "2020-01-04"), joined(None, "2019-06-30", "2019-07-30")];
        let (recs, _) = clean_records(&rows);
        let text = write_clean_csv(&recs, None);
        assert_eq!(read_clean_csv(text.as_bytes()).unwrap(), recs);
        let dict = crate::ingest::parse_data_dictionary(b"[CAUSE]\n1,Lightning\n[C_METHOD]\n2,x\n[AGENCY]\nCDF,CAL FIRE\n[OBJECTIVE]\n1,Suppression\n").unwrap();
        let labelled = write_clean_csv(&recs, Some(&dict));
        assert!(labelled.lines().nth(1).unwrap().ends_with("Lightning,CAL FIRE,CODE_1,Suppression"));
        assert_eq!(read_clean_csv(labelled.as_bytes()).unwrap(), recs);
    }
}
