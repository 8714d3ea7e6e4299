//! Fire perimeter attribute table (CSV export of the FRAP perimeters layer).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("missing required column {0}")]
    MissingColumn(String),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
}

/// Name used when an incident has a blank FIRE_NAME.
pub const UNNAMED_FIRE: &str = "UNNAMED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFireRecord {
    /// YEAR_: the year the perimeter was digitized, not necessarily the fire year.
    pub year_digitized: i32,
    pub irwin_id: Option<String>,
    pub fire_name: String,
    pub alarm_date_text: String,
    pub cont_date_text: String,
    pub cause_code: Option<i64>,
    pub agency_code: Option<String>,
    pub unit_id: Option<String>,
    pub c_method_code: Option<i64>,
    pub objective_code: Option<i64>,
    pub gis_acres: Option<f64>,
}

/// Header key used for matching: uppercase with spaces and underscores
/// removed, so `IRWIN ID`, `IRWINID` and `irwin_id` all agree.
pub fn header_key(name: &str) -> String {
    name.trim().chars().filter(|c| *c != ' ' && *c != '_').flat_map(char::to_uppercase).collect()
}

/// Uppercase, trimmed, internal whitespace collapsed.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

pub(crate) fn parse_code(text: &str) -> Option<Result<i64, String>> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Ok(v) = t.parse::<i64>() {
        return Some(Ok(v));
    }
    // Some exports write integer codes as floats ("14.0").
    match t.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => Some(Ok(v as i64)),
        _ => Some(Err(format!("not an integer code: {t:?}"))),
    }
}

fn opt_text(text: &str) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_string())
}

const REQUIRED: [&str; 5] = ["YEAR_", "FIRE_NAME", "ALARM_DATE", "CONT_DATE", "GIS_ACRES"];

pub(crate) struct Columns {
    keys: Vec<String>,
}

impl Columns {
    pub(crate) fn new(headers: &csv::StringRecord) -> Self {
        Self { keys: headers.iter().map(header_key).collect() }
    }

    pub(crate) fn find(&self, name: &str) -> Option<usize> {
        let key = header_key(name);
        self.keys.iter().position(|k| *k == key)
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize, CsvError> {
        self.find(name).ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }
}

pub(crate) fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub(crate) fn csv_error(e: csv::Error) -> CsvError {
    let line = e.position().map_or(0, |p| p.line());
    CsvError::MalformedCsv { line, message: e.to_string() }
}

/// Parse the perimeter attribute CSV. Row order is preserved and empty cells
/// become absent values.
pub fn parse_perimeter_csv(bytes: &[u8]) -> Result<Vec<RawFireRecord>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = Columns::new(&headers);
    let [year, name, alarm, cont, acres] = REQUIRED.map(|c| cols.require(c));
    let (year, name, alarm, cont, acres) = (year?, name?, alarm?, cont?, acres?);
    let irwin = cols.find("IRWINID");
    let cause = cols.find("CAUSE");
    let agency = cols.find("AGENCY");
    let unit = cols.find("UNIT_ID");
    let c_method = cols.find("C_METHOD");
    let objective = cols.find("OBJECTIVE");

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = line_of(&row);
        let cell = |i: Option<usize>| i.and_then(|i| row.get(i)).unwrap_or("");
        let bad = |message: String| CsvError::MalformedCsv { line, message };
        let code = |i: Option<usize>, col: &str| -> Result<Option<i64>, CsvError> {
            parse_code(cell(i)).transpose().map_err(|m| bad(format!("{col}: {m}")))
        };

        let year_digitized = match parse_code(cell(Some(year))) {
            Some(Ok(v)) => i32::try_from(v).map_err(|_| bad(format!("YEAR_ out of range: {v}")))?,
            Some(Err(m)) => return Err(bad(format!("YEAR_: {m}"))),
            None => return Err(bad("YEAR_ is empty".into())),
        };
        let gis_acres = match cell(Some(acres)).trim() {
            "" => None,
            t => {
                let v: f64 = t.parse().map_err(|_| bad(format!("GIS_ACRES: not a number: {t:?}")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(format!("GIS_ACRES must be finite and nonnegative, got {t}")));
                }
                Some(v)
            }
        };
        let fire_name = opt_text(cell(Some(name))).unwrap_or_else(|| UNNAMED_FIRE.to_string());

        out.push(RawFireRecord {
            year_digitized,
            irwin_id: opt_text(cell(irwin)),
            fire_name,
            alarm_date_text: cell(Some(alarm)).trim().to_string(),
            cont_date_text: cell(Some(cont)).trim().to_string(),
            cause_code: code(cause, "CAUSE")?,
            agency_code: opt_text(cell(agency)),
            unit_id: opt_text(cell(unit)),
            c_method_code: code(c_method, "C_METHOD")?,
            objective_code: code(objective, "OBJECTIVE")?,
            gis_acres,
        });
    }
    Ok(out)
}

/// Inverse of [`parse_perimeter_csv`] for the columns it understands.
pub fn write_perimeter_csv(records: &[RawFireRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "YEAR_", "IRWINID", "FIRE_NAME", "ALARM_DATE", "CONT_DATE", "CAUSE", "AGENCY", "UNIT_ID", "C_METHOD",
        "OBJECTIVE", "GIS_ACRES",
    ])
    .expect("in-memory write");
    let num = |v: Option<i64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.year_digitized.to_string(),
            r.irwin_id.clone().unwrap_or_default(),
            r.fire_name.clone(),
            r.alarm_date_text.clone(),
            r.cont_date_text.clone(),
            num(r.cause_code),
            r.agency_code.clone().unwrap_or_default(),
            r.unit_id.clone().unwrap_or_default(),
            num(r.c_method_code),
            num(r.objective_code),
            r.gis_acres.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_ROWS: &str = "YEAR_,STATE,AGENCY,UNIT_ID,FIRE_NAME,IRWINID,ALARM_DATE,CONT_DATE,CAUSE,C_METHOD,OBJECTIVE,GIS_ACRES\n\
        2019,CA,CDF,LNU,WALKER,{A1},2019-07-01,2019-07-04,14,1,1,120.5\n\
        1945,CA,USF,ENF,old fire,,1899/09/15,1899/09/20,1,8,2,\n";

    #[test]
    fn parses_two_rows() {
        let recs = parse_perimeter_csv(TWO_ROWS.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].irwin_id.as_deref(), Some("{A1}"));
        assert_eq!(recs[0].cause_code, Some(14));
        assert_eq!(recs[0].gis_acres, Some(120.5));
        assert_eq!(recs[1].fire_name, "old fire");
        assert_eq!(recs[1].irwin_id, None);
        assert_eq!(recs[1].gis_acres, None);
        assert_eq!(recs[1].alarm_date_text, "1899/09/15");
    }

    #[test]
    fn missing_column_is_named() {
        let text = "YEAR_,FIRE_NAME,ALARM_DATE,GIS_ACRES\n2019,A,2019-01-01,1\n";
        assert_eq!(parse_perimeter_csv(text.as_bytes()), Err(CsvError::MissingColumn("CONT_DATE".into())));
    }

    #[test]
    fn headers_match_case_insensitively() {
        let text = "year_,fire_name,alarm_date,cont_date,gis_acres,Irwin ID\n2019,A,2019-01-01,2019-01-02,3,X\n";
        let recs = parse_perimeter_csv(text.as_bytes()).unwrap();
        assert_eq!(recs[0].irwin_id.as_deref(), Some("X"));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "YEAR_,FIRE_NAME,ALARM_DATE,CONT_DATE,GIS_ACRES\n2019,A,x,y,1\n2019,B,x,y,-4\n";
        match parse_perimeter_csv(text.as_bytes()) {
            Err(CsvError::MalformedCsv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let ragged = "YEAR_,FIRE_NAME,ALARM_DATE,CONT_DATE,GIS_ACRES\n2019,A,x\n";
        assert!(matches!(parse_perimeter_csv(ragged.as_bytes()), Err(CsvError::MalformedCsv { line: 2, .. })));
    }

    #[test]
    fn float_codes_are_accepted() {
        assert_eq!(parse_code("14.0"), Some(Ok(14)));
        assert!(matches!(parse_code("14.5"), Some(Err(_))));
        assert_eq!(parse_code("  "), None);
    }

    #[test]
    fn name_normalization() {
        assert_eq!(normalize_name("  witch   creek "), "WITCH CREEK");
    }
}
