//! Polygon geometry: WKT / GeoJSON parsing and area-weighted centroids.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Below this total absolute area (square degrees) the centroid falls back
/// to the vertex mean of the outer rings.
pub const MIN_CENTROID_AREA: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("geometry parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unsupported geometry type {0}")]
    UnsupportedGeometry(String),
    #[error("ring {ring} is not closed")]
    UnclosedRing { ring: usize },
    #[error("ring {ring} has {points} points, need at least 4")]
    TooFewPoints { ring: usize, points: usize },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polygon has no rings")]
    NoRings,
    #[error("degenerate geometry: no vertices")]
    DegenerateGeometry,
}

pub type Point = (f64, f64);

/// First ring is the outer boundary, the rest are holes. Coordinates are
/// `(longitude, latitude)` in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub rings: Vec<Vec<Point>>,
}

impl Polygon {
    pub fn new(rings: Vec<Vec<Point>>) -> Result<Self, GeometryError> {
        let p = Polygon { rings };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.rings.is_empty() {
            return Err(GeometryError::NoRings);
        }
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.len() < 4 {
                return Err(GeometryError::TooFewPoints { ring: i, points: ring.len() });
            }
            if ring.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(GeometryError::NonFinite);
            }
            if ring.first() != ring.last() {
                return Err(GeometryError::UnclosedRing { ring: i });
            }
        }
        Ok(())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        Polygon {
            rings: self.rings.iter().map(|r| r.iter().map(|&(x, y)| (x + dx, y + dy)).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Polygon(Polygon),
    MultiPolygon(Vec<Polygon>),
}

impl Geometry {
    pub fn polygons(&self) -> &[Polygon] {
        match self {
            Geometry::Polygon(p) => std::slice::from_ref(p),
            Geometry::MultiPolygon(ps) => ps,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Geometry {
        match self {
            Geometry::Polygon(p) => Geometry::Polygon(p.translated(dx, dy)),
            Geometry::MultiPolygon(ps) => Geometry::MultiPolygon(ps.iter().map(|p| p.translated(dx, dy)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub latitude: f64,
    pub longitude: f64,
}

/// Signed shoelace area and first moments of a closed ring, relative to
/// `origin`.
fn ring_moments(ring: &[Point], origin: Point) -> (f64, f64, f64) {
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for w in ring.windows(2) {
        let (x0, y0) = (w[0].0 - origin.0, w[0].1 - origin.1);
        let (x1, y1) = (w[1].0 - origin.0, w[1].1 - origin.1);
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        mx += (x0 + x1) * cross;
        my += (y0 + y1) * cross;
    }
    (a / 2.0, mx / 6.0, my / 6.0)
}

/// Area-weighted planar centroid. Outer rings add, holes subtract,
/// independent of ring winding.
pub fn polygon_centroid(geometry: &Geometry) -> Result<Centroid, GeometryError> {
    let polygons = geometry.polygons();
    for p in polygons {
        p.validate()?;
    }
    let origin = polygons
        .iter()
        .find_map(|p| p.rings.first().and_then(|r| r.first().copied()))
        .ok_or(GeometryError::DegenerateGeometry)?;

    let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
    for p in polygons {
        for (i, ring) in p.rings.iter().enumerate() {
            let (a, rx, ry) = ring_moments(ring, origin);
            let orient = if a < 0.0 { -1.0 } else { 1.0 };
            let sign = if i == 0 { orient } else { -orient };
            area += sign * a;
            mx += sign * rx;
            my += sign * ry;
        }
    }

    if area.abs() >= MIN_CENTROID_AREA {
        return Ok(Centroid { longitude: origin.0 + mx / area, latitude: origin.1 + my / area });
    }

    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in polygons {
        if let Some(outer) = p.rings.first() {
            for &(x, y) in &outer[..outer.len().saturating_sub(1)] {
                sx += x;
                sy += y;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(GeometryError::DegenerateGeometry);
    }
    Ok(Centroid { longitude: sx / n as f64, latitude: sy / n as f64 })
}

/// Parse `POLYGON` / `MULTIPOLYGON` WKT or a GeoJSON Polygon / MultiPolygon
/// (bare geometry or Feature). Rings must already be closed.
pub fn parse_polygon_text(text: &str) -> Result<Geometry, GeometryError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        parse_geojson(trimmed)
    } else {
        WktParser { src: text.as_bytes(), pos: 0 }.parse()
    }
}

struct WktParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl WktParser<'_> {
    fn err(&self, message: impl Into<String>) -> GeometryError {
        GeometryError::Parse { position: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn keyword(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_uppercase()
    }

    fn expect(&mut self, byte: u8) -> Result<(), GeometryError> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", byte as char)))
        }
    }

    fn eat(&mut self, byte: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<f64, GeometryError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E') {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.err("invalid utf-8"))?;
        s.parse::<f64>().map_err(|_| GeometryError::Parse { position: start, message: format!("bad number {s:?}") })
    }

    fn ring(&mut self) -> Result<Vec<Point>, GeometryError> {
        self.expect(b'(')?;
        let mut pts = Vec::new();
        loop {
            let x = self.number()?;
            let y = self.number()?;
            pts.push((x, y));
            if !self.eat(b',') {
                break;
            }
        }
        self.expect(b')')?;
        Ok(pts)
    }

    fn polygon_body(&mut self) -> Result<Polygon, GeometryError> {
        self.expect(b'(')?;
        let mut rings = Vec::new();
        loop {
            rings.push(self.ring()?);
            if !self.eat(b',') {
                break;
            }
        }
        self.expect(b')')?;
        Polygon::new(rings)
    }

    fn parse(mut self) -> Result<Geometry, GeometryError> {
        let kind = self.keyword();
        let geometry = match kind.as_str() {
            "POLYGON" => Geometry::Polygon(self.polygon_body()?),
            "MULTIPOLYGON" => {
                self.expect(b'(')?;
                let mut parts = Vec::new();
                loop {
                    parts.push(self.polygon_body()?);
                    if !self.eat(b',') {
                        break;
                    }
                }
                self.expect(b')')?;
                Geometry::MultiPolygon(parts)
            }
            "" => return Err(self.err("expected geometry keyword")),
            other => return Err(GeometryError::UnsupportedGeometry(other.to_string())),
        };
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("trailing characters"));
        }
        Ok(geometry)
    }
}

fn json_err(message: impl Into<String>) -> GeometryError {
    GeometryError::Parse { position: 0, message: message.into() }
}

fn json_ring(v: &Value) -> Result<Vec<Point>, GeometryError> {
    let arr = v.as_array().ok_or_else(|| json_err("ring is not an array"))?;
    arr.iter()
        .map(|p| {
            let c = p.as_array().filter(|c| c.len() >= 2).ok_or_else(|| json_err("bad position"))?;
            match (c[0].as_f64(), c[1].as_f64()) {
                (Some(x), Some(y)) => Ok((x, y)),
                _ => Err(json_err("non-numeric coordinate")),
            }
        })
        .collect()
}

fn json_polygon(v: &Value) -> Result<Polygon, GeometryError> {
    let rings = v.as_array().ok_or_else(|| json_err("polygon is not an array"))?;
    Polygon::new(rings.iter().map(json_ring).collect::<Result<_, _>>()?)
}

fn parse_geojson(text: &str) -> Result<Geometry, GeometryError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| GeometryError::Parse { position: e.column(), message: e.to_string() })?;
    let v = match v.get("type").and_then(Value::as_str) {
        Some("Feature") => v.get("geometry").cloned().ok_or_else(|| json_err("feature without geometry"))?,
        _ => v,
    };
    let kind = v.get("type").and_then(Value::as_str).ok_or_else(|| json_err("missing type"))?;
    let coords = v.get("coordinates");
    match kind {
        "Polygon" => Ok(Geometry::Polygon(json_polygon(coords.ok_or_else(|| json_err("missing coordinates"))?)?)),
        "MultiPolygon" => {
            let parts = coords.and_then(Value::as_array).ok_or_else(|| json_err("missing coordinates"))?;
            Ok(Geometry::MultiPolygon(parts.iter().map(json_polygon).collect::<Result<_, _>>()?))
        }
        other => Err(GeometryError::UnsupportedGeometry(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Geometry {
        parse_polygon_text("POLYGON((0 0,1 0,1 1,0 1,0 0))").unwrap()
    }

    #[test]
    fn parses_simple_polygon() {
        let Geometry::Polygon(p) = unit_square() else { panic!() };
        assert_eq!(p.rings.len(), 1);
        assert_eq!(p.rings[0].len(), 5);
    }

    #[test]
    fn rejects_points_and_lines() {
        assert_eq!(parse_polygon_text("POINT(1 2)"), Err(GeometryError::UnsupportedGeometry("POINT".into())));
        assert!(matches!(
            parse_polygon_text("LINESTRING(0 0, 1 1)"),
            Err(GeometryError::UnsupportedGeometry(_))
        ));
        assert!(matches!(
            parse_polygon_text(r#"{"type":"Point","coordinates":[1,2]}"#),
            Err(GeometryError::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn never_auto_closes() {
        assert_eq!(parse_polygon_text("POLYGON((0 0,1 0,1 1,0 1))"), Err(GeometryError::UnclosedRing { ring: 0 }));
        let gj = r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0.5]]]}"#;
        assert_eq!(parse_polygon_text(gj), Err(GeometryError::UnclosedRing { ring: 0 }));
    }

    #[test]
    fn parse_error_reports_position() {
        match parse_polygon_text("POLYGON((0 0,1 0,1 1,0 1,0 0)") {
            Err(GeometryError::Parse { position, .. }) => assert_eq!(position, 29),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn geojson_feature_and_multipolygon() {
        let gj = r#"{"type":"Feature","properties":{},"geometry":{"type":"MultiPolygon","coordinates":[[[[0,0],[2,0],[2,2],[0,2],[0,0]]],[[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}}"#;
        let Geometry::MultiPolygon(parts) = parse_polygon_text(gj).unwrap() else { panic!() };
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn unit_square_centroid() {
        let c = polygon_centroid(&unit_square()).unwrap();
        assert_eq!((c.latitude, c.longitude), (0.5, 0.5));
    }

    #[test]
    fn centered_hole_keeps_centroid() {
        let g = parse_polygon_text("POLYGON((0 0,1 0,1 1,0 1,0 0),(0.25 0.25,0.25 0.75,0.75 0.75,0.75 0.25,0.25 0.25))").unwrap();
        let c = polygon_centroid(&g).unwrap();
        assert!((c.latitude - 0.5).abs() < 1e-12 && (c.longitude - 0.5).abs() < 1e-12);
    }

    #[test]
    fn off_center_hole_shifts_centroid() {
        // 2x1 rectangle with the right unit square removed leaves the left square.
        let g = parse_polygon_text("MULTIPOLYGON(((0 0,2 0,2 1,0 1,0 0),(1 0,1 1,2 1,2 0,1 0)))").unwrap();
        let c = polygon_centroid(&g).unwrap();
        assert!((c.longitude - 0.5).abs() < 1e-12 && (c.latitude - 0.5).abs() < 1e-12);
    }

    #[test]
    fn multipolygon_weights_by_area() {
        let g = parse_polygon_text("MULTIPOLYGON(((0 0,1 0,1 1,0 1,0 0)),((2 0,4 0,4 2,2 2,2 0)))").unwrap();
        let c = polygon_centroid(&g).unwrap();
        // areas 1 and 4, centroids (0.5,0.5) and (3,1)
        assert!((c.longitude - (0.5 + 12.0) / 5.0).abs() < 1e-12);
        assert!((c.latitude - (0.5 + 4.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_falls_back_to_vertex_mean() {
        let g = parse_polygon_text("POLYGON((0 0,2 0,4 0,0 0))").unwrap();
        let c = polygon_centroid(&g).unwrap();
        assert_eq!((c.longitude, c.latitude), (2.0, 0.0));
    }

    #[test]
    fn winding_does_not_matter() {
        let cw = parse_polygon_text("POLYGON((0 0,0 1,1 1,1 0,0 0))").unwrap();
        assert_eq!(polygon_centroid(&cw).unwrap(), polygon_centroid(&unit_square()).unwrap());
    }
}
