//! Minimal ESRI shapefile support: Polygon / PolygonZ `.shp` records plus
//! dBASE III `.dbf` attributes with C, N, F and D fields.
//!
//! Layout reminders: the `.shp` main header is 100 bytes with the file code
//! (9994) and file length big-endian, version (1000) and shape type
//! little-endian. Each record has an 8-byte big-endian header (record number,
//! content length in 16-bit words).

use thiserror::Error;

use super::geometry::{Geometry, Point, Polygon};

pub const SHP_FILE_CODE: i32 = 9994;
pub const SHP_VERSION: i32 = 1000;
pub const SHAPE_NULL: i32 = 0;
pub const SHAPE_POLYGON: i32 = 5;
pub const SHAPE_POLYGON_Z: i32 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum ShapefileError {
    #[error("bad .shp magic number")]
    BadMagic,
    #[error("unsupported .shp version {0}")]
    BadVersion(i32),
    #[error("unsupported shape type {0}")]
    UnsupportedShapeType(i32),
    #[error(".shp has {shp} records but .dbf has {dbf}")]
    RecordCountMismatch { shp: usize, dbf: usize },
    #[error("truncated {file} at byte {offset}")]
    Truncated { file: &'static str, offset: usize },
    #[error("unsupported .dbf: {0}")]
    UnsupportedDbf(String),
    #[error(".dbf lacks field {0}")]
    MissingField(String),
}

fn be_i32(b: &[u8], at: usize, file: &'static str) -> Result<i32, ShapefileError> {
    b.get(at..at + 4)
        .map(|s| i32::from_be_bytes(s.try_into().unwrap()))
        .ok_or(ShapefileError::Truncated { file, offset: at })
}

fn le_i32(b: &[u8], at: usize, file: &'static str) -> Result<i32, ShapefileError> {
    b.get(at..at + 4)
        .map(|s| i32::from_le_bytes(s.try_into().unwrap()))
        .ok_or(ShapefileError::Truncated { file, offset: at })
}

fn le_f64(b: &[u8], at: usize) -> Result<f64, ShapefileError> {
    b.get(at..at + 8)
        .map(|s| f64::from_le_bytes(s.try_into().unwrap()))
        .ok_or(ShapefileError::Truncated { file: "shp", offset: at })
}

/// One decoded `.shp` record; `None` for null shapes and records whose rings
/// cannot form a valid polygon.
pub type ShapeRecord = Option<Geometry>;

fn signed_area(ring: &[Point]) -> f64 {
    ring.windows(2).map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1).sum::<f64>() / 2.0
}

/// Group shapefile rings into polygons: clockwise rings start a new polygon,
/// counter-clockwise rings are holes of the current one.
fn assemble(rings: Vec<Vec<Point>>) -> Option<Geometry> {
    let mut polygons: Vec<Vec<Vec<Point>>> = Vec::new();
    for ring in rings {
        let clockwise = signed_area(&ring) < 0.0;
        match polygons.last_mut() {
            Some(p) if !clockwise => p.push(ring),
            _ => polygons.push(vec![ring]),
        }
    }
    let polygons: Vec<Polygon> = polygons.into_iter().map(Polygon::new).collect::<Result<_, _>>().ok()?;
    match polygons.len() {
        0 => None,
        1 => Some(Geometry::Polygon(polygons.into_iter().next().unwrap())),
        _ => Some(Geometry::MultiPolygon(polygons)),
    }
}

pub fn read_shp(shp: &[u8]) -> Result<Vec<ShapeRecord>, ShapefileError> {
    if shp.len() < 100 {
        return Err(ShapefileError::Truncated { file: "shp", offset: shp.len() });
    }
    if be_i32(shp, 0, "shp")? != SHP_FILE_CODE {
        return Err(ShapefileError::BadMagic);
    }
    let version = le_i32(shp, 28, "shp")?;
    if version != SHP_VERSION {
        return Err(ShapefileError::BadVersion(version));
    }
    let file_type = le_i32(shp, 32, "shp")?;
    if file_type != SHAPE_POLYGON && file_type != SHAPE_POLYGON_Z {
        return Err(ShapefileError::UnsupportedShapeType(file_type));
    }
    let file_len = (be_i32(shp, 24, "shp")? as usize * 2).min(shp.len());

    let mut out = Vec::new();
    let mut at = 100;
    while at + 8 <= file_len {
        let content_len = be_i32(shp, at + 4, "shp")? as usize * 2;
        let start = at + 8;
        let end = start + content_len;
        if end > shp.len() {
            return Err(ShapefileError::Truncated { file: "shp", offset: shp.len() });
        }
        let shape_type = le_i32(shp, start, "shp")?;
        let record = match shape_type {
            SHAPE_NULL => None,
            SHAPE_POLYGON | SHAPE_POLYGON_Z => {
                let num_parts = le_i32(shp, start + 36, "shp")?.max(0) as usize;
                let num_points = le_i32(shp, start + 40, "shp")?.max(0) as usize;
                let parts_at = start + 44;
                let points_at = parts_at + 4 * num_parts;
                if points_at + 16 * num_points > end {
                    return Err(ShapefileError::Truncated { file: "shp", offset: end });
                }
                let mut starts = Vec::with_capacity(num_parts + 1);
                for i in 0..num_parts {
                    starts.push(le_i32(shp, parts_at + 4 * i, "shp")?.max(0) as usize);
                }
                starts.push(num_points);
                let mut rings = Vec::with_capacity(num_parts);
                let mut ok = true;
                for w in starts.windows(2) {
                    if w[0] > w[1] || w[1] > num_points {
                        ok = false;
                        break;
                    }
                    let mut ring = Vec::with_capacity(w[1] - w[0]);
                    for p in w[0]..w[1] {
                        let off = points_at + 16 * p;
                        ring.push((le_f64(shp, off)?, le_f64(shp, off + 8)?));
                    }
                    rings.push(ring);
                }
                if ok {
                    assemble(rings)
                } else {
                    None
                }
            }
            other => return Err(ShapefileError::UnsupportedShapeType(other)),
        };
        out.push(record);
        at = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbfField {
    pub name: String,
    pub kind: u8,
    pub length: usize,
    pub decimals: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbfTable {
    pub fields: Vec<DbfField>,
    /// Trimmed cell text per record, deleted records included.
    pub records: Vec<Vec<String>>,
}

impl DbfTable {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        let key = super::perimeter::header_key(name);
        self.fields.iter().position(|f| super::perimeter::header_key(&f.name) == key)
    }
}

pub fn read_dbf(dbf: &[u8]) -> Result<DbfTable, ShapefileError> {
    if dbf.len() < 32 {
        return Err(ShapefileError::Truncated { file: "dbf", offset: dbf.len() });
    }
    if dbf[0] != 0x03 {
        return Err(ShapefileError::UnsupportedDbf(format!("version byte 0x{:02X}", dbf[0])));
    }
    let n_records = u32::from_le_bytes(dbf[4..8].try_into().unwrap()) as usize;
    let header_len = u16::from_le_bytes(dbf[8..10].try_into().unwrap()) as usize;
    let record_len = u16::from_le_bytes(dbf[10..12].try_into().unwrap()) as usize;

    let mut fields = Vec::new();
    let mut at = 32;
    loop {
        match dbf.get(at) {
            None => return Err(ShapefileError::Truncated { file: "dbf", offset: at }),
            Some(0x0D) => break,
            Some(_) => {}
        }
        let desc = dbf.get(at..at + 32).ok_or(ShapefileError::Truncated { file: "dbf", offset: at })?;
        let name_end = desc[..11].iter().position(|&b| b == 0).unwrap_or(11);
        let name = String::from_utf8_lossy(&desc[..name_end]).trim().to_string();
        let kind = desc[11];
        if !matches!(kind, b'C' | b'N' | b'F' | b'D') {
            return Err(ShapefileError::UnsupportedDbf(format!("field {name} has type {}", kind as char)));
        }
        fields.push(DbfField { name, kind, length: desc[16] as usize, decimals: desc[17] });
        at += 32;
    }

    let mut records = Vec::with_capacity(n_records);
    for r in 0..n_records {
        let start = header_len + r * record_len;
        let rec = dbf.get(start..start + record_len).ok_or(ShapefileError::Truncated { file: "dbf", offset: start })?;
        let mut off = 1; // deletion flag
        let mut cells = Vec::with_capacity(fields.len());
        for f in &fields {
            let raw = rec.get(off..off + f.length).ok_or(ShapefileError::Truncated { file: "dbf", offset: start + off })?;
            cells.push(String::from_utf8_lossy(raw).trim().to_string());
            off += f.length;
        }
        records.push(cells);
    }
    Ok(DbfTable { fields, records })
}

/// Write a Polygon shapefile pair for the given geometries and character
/// attribute columns. Outer rings are written clockwise and holes
/// counter-clockwise, as the format requires.
pub fn write_shapefile(geometries: &[Geometry], columns: &[(&str, Vec<String>)]) -> (Vec<u8>, Vec<u8>) {
    let mut records = Vec::new();
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, g) in geometries.iter().enumerate() {
        let mut rings: Vec<Vec<Point>> = Vec::new();
        for p in g.polygons() {
            for (k, ring) in p.rings.iter().enumerate() {
                let want_cw = k == 0;
                let is_cw = signed_area(ring) < 0.0;
                let mut r = ring.clone();
                if want_cw != is_cw {
                    r.reverse();
                }
                rings.push(r);
            }
        }
        let pts: Vec<Point> = rings.iter().flatten().copied().collect();
        let (bx0, by0, bx1, by1) = pts.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        );
        xmin = xmin.min(bx0);
        ymin = ymin.min(by0);
        xmax = xmax.max(bx1);
        ymax = ymax.max(by1);
        let mut content = Vec::new();
        content.extend_from_slice(&SHAPE_POLYGON.to_le_bytes());
        for v in [bx0, by0, bx1, by1] {
            content.extend_from_slice(&v.to_le_bytes());
        }
        content.extend_from_slice(&(rings.len() as i32).to_le_bytes());
        content.extend_from_slice(&(pts.len() as i32).to_le_bytes());
        let mut offset = 0i32;
        for r in &rings {
            content.extend_from_slice(&offset.to_le_bytes());
            offset += r.len() as i32;
        }
        for (x, y) in pts {
            content.extend_from_slice(&x.to_le_bytes());
            content.extend_from_slice(&y.to_le_bytes());
        }
        let mut rec = Vec::new();
        rec.extend_from_slice(&(i as i32 + 1).to_be_bytes());
        rec.extend_from_slice(&((content.len() / 2) as i32).to_be_bytes());
        rec.extend_from_slice(&content);
        records.push(rec);
    }
    let body: usize = records.iter().map(Vec::len).sum();
    let mut shp = Vec::with_capacity(100 + body);
    shp.extend_from_slice(&SHP_FILE_CODE.to_be_bytes());
    shp.extend_from_slice(&[0u8; 20]);
    shp.extend_from_slice(&(((100 + body) / 2) as i32).to_be_bytes());
    shp.extend_from_slice(&SHP_VERSION.to_le_bytes());
    shp.extend_from_slice(&SHAPE_POLYGON.to_le_bytes());
    for v in [xmin, ymin, xmax, ymax, 0.0, 0.0, 0.0, 0.0] {
        shp.extend_from_slice(&v.to_le_bytes());
    }
    for r in records {
        shp.extend_from_slice(&r);
    }

    let n = geometries.len();
    let widths: Vec<usize> = columns
        .iter()
        .map(|(_, vals)| vals.iter().map(String::len).max().unwrap_or(1).clamp(1, 254))
        .collect();
    let record_len = 1 + widths.iter().sum::<usize>();
    let header_len = 32 + 32 * columns.len() + 1;
    let mut dbf = vec![0x03, 125, 1, 1];
    dbf.extend_from_slice(&(n as u32).to_le_bytes());
    dbf.extend_from_slice(&(header_len as u16).to_le_bytes());
    dbf.extend_from_slice(&(record_len as u16).to_le_bytes());
    dbf.extend_from_slice(&[0u8; 20]);
    for ((name, _), &w) in columns.iter().zip(&widths) {
        let mut desc = [0u8; 32];
        let bytes = name.as_bytes();
        desc[..bytes.len().min(10)].copy_from_slice(&bytes[..bytes.len().min(10)]);
        desc[11] = b'C';
        desc[16] = w as u8;
        dbf.extend_from_slice(&desc);
    }
    dbf.push(0x0D);
    for i in 0..n {
        dbf.push(b' ');
        for ((_, vals), &w) in columns.iter().zip(&widths) {
            let v = vals.get(i).map(String::as_str).unwrap_or("");
            let mut cell = v.as_bytes()[..v.len().min(w)].to_vec();
            cell.resize(w, b' ');
            dbf.extend_from_slice(&cell);
        }
    }
    dbf.push(0x1A);
    (shp, dbf)
}
