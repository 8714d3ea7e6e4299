use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{parse_polygon_text, polygon_centroid, Centroid, Geometry};
use super::perimeter::{
    csv_error, header_key, line_of, normalize_name, parse_code, Columns, CsvError, RawFireRecord, UNNAMED_FIRE,
};
use super::shapefile::{read_dbf, read_shp, ShapefileError};

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryEntry {
    pub year: i32,
    pub irwin_id: Option<String>,
    pub fire_name: String,
    /// `None` when the source geometry was missing or could not be decoded.
    pub geometry: Option<Geometry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeometryTable {
    pub entries: Vec<GeometryEntry>,
}

#[derive(Debug, Error)]
pub enum GeometrySourceError {
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Shapefile(#[from] ShapefileError),
}

fn year_of(text: &str) -> Option<i32> {
    parse_code(text).and_then(Result::ok).and_then(|v| i32::try_from(v).ok())
}

fn name_or_unnamed(text: &str) -> String {
    let t = text.trim();
    if t.is_empty() {
        UNNAMED_FIRE.to_string()
    } else {
        t.to_string()
    }
}

/// Read a `.shp`/`.dbf` pair; attributes YEAR_, IRWINID and FIRE_NAME come
/// from the `.dbf` by name.
pub fn read_shapefile_subset(shp: &[u8], dbf: &[u8]) -> Result<GeometryTable, ShapefileError> {
    let shapes = read_shp(shp)?;
    let table = read_dbf(dbf)?;
    if shapes.len() != table.records.len() {
        return Err(ShapefileError::RecordCountMismatch { shp: shapes.len(), dbf: table.records.len() });
    }
    let year = table.field_index("YEAR_").ok_or_else(|| ShapefileError::MissingField("YEAR_".into()))?;
    let name = table.field_index("FIRE_NAME").ok_or_else(|| ShapefileError::MissingField("FIRE_NAME".into()))?;
    let irwin = table.field_index("IRWINID");
    let entries = shapes
        .into_iter()
        .zip(&table.records)
        .map(|(geometry, cells)| GeometryEntry {
            year: year_of(&cells[year]).unwrap_or(i32::MIN),
            irwin_id: irwin.map(|i| cells[i].clone()).filter(|s| !s.is_empty()),
            fire_name: name_or_unnamed(&cells[name]),
            geometry,
        })
        .collect();
    Ok(GeometryTable { entries })
}

/// Geometry CSV with columns YEAR_, FIRE_NAME, GEOMETRY (WKT or GeoJSON) and
/// optional IRWINID. Undecodable geometry is kept as a failed entry.
pub fn read_geometry_csv(bytes: &[u8]) -> Result<GeometryTable, CsvError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let cols = Columns::new(&headers);
    let year = cols.require("YEAR_")?;
    let name = cols.require("FIRE_NAME")?;
    let geom = cols.require("GEOMETRY")?;
    let irwin = cols.find("IRWINID");
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let year_v = year_of(&row[year]).ok_or_else(|| CsvError::MalformedCsv {
            line: line_of(&row),
            message: format!("YEAR_: {:?}", &row[year]),
        })?;
        entries.push(GeometryEntry {
            year: year_v,
            irwin_id: irwin.map(|i| row[i].trim().to_string()).filter(|s| !s.is_empty()),
            fire_name: name_or_unnamed(&row[name]),
            geometry: parse_polygon_text(&row[geom]).ok(),
        });
    }
    Ok(GeometryTable { entries })
}

/// Pick the reader from the file name: `.shp` expects a sibling `.dbf`.
pub fn is_shapefile_path(path: &std::path::Path) -> bool {
    path.extension().is_some_and(|e| header_key(&e.to_string_lossy()) == "SHP")
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRecord {
    pub record: RawFireRecord,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub records_in: usize,
    pub joined: usize,
    pub unmatched: usize,
    pub ambiguous: usize,
    pub failed_geometry: usize,
}

impl JoinReport {
    pub fn dropped(&self) -> usize {
        self.unmatched + self.ambiguous + self.failed_geometry
    }
}

/// Attach centroids to records.
///
/// The key is `(year, IRWIN ID)` when both sides carry an id, otherwise
/// `(year, normalized fire name)`. Keys that hit several geometry entries,
/// and entries already claimed by an earlier record, count as ambiguous.
pub fn join_geometry(records: &[RawFireRecord], geo: &GeometryTable) -> (Vec<JoinedRecord>, JoinReport) {
    let mut by_id: HashMap<(i32, &str), Vec<usize>> = HashMap::new();
    let mut by_name: HashMap<(i32, String), Vec<usize>> = HashMap::new();
    for (i, e) in geo.entries.iter().enumerate() {
        if let Some(id) = &e.irwin_id {
            by_id.entry((e.year, id.as_str())).or_default().push(i);
        }
        by_name.entry((e.year, normalize_name(&e.fire_name))).or_default().push(i);
    }

    let mut claimed = vec![false; geo.entries.len()];
    let mut report = JoinReport { records_in: records.len(), ..JoinReport::default() };
    let mut out = Vec::new();

    for r in records {
        let by_id_hits = r.irwin_id.as_deref().and_then(|id| by_id.get(&(r.year_digitized, id)));
        let candidates: Vec<usize> = match by_id_hits {
            Some(hits) => hits.clone(),
            None => by_name
                .get(&(r.year_digitized, normalize_name(&r.fire_name)))
                .map(|hits| {
                    hits.iter()
                        .copied()
                        .filter(|&i| r.irwin_id.is_none() || geo.entries[i].irwin_id.is_none())
                        .collect()
                })
                .unwrap_or_default(),
        };
        let entry = match candidates.as_slice() {
            [] => {
                report.unmatched += 1;
                continue;
            }
            [one] if !claimed[*one] => *one,
            _ => {
                report.ambiguous += 1;
                continue;
            }
        };
        claimed[entry] = true;
        let centroid: Option<Centroid> = geo.entries[entry].geometry.as_ref().and_then(|g| polygon_centroid(g).ok());
        match centroid {
            Some(c) => out.push(JoinedRecord { record: r.clone(), latitude: c.latitude, longitude: c.longitude }),
            None => report.failed_geometry += 1,
        }
    }
    report.joined = out.len();
    (out, report)
}
