//! Source parsing and the geometry join.

pub mod dictionary;
pub mod geometry;
pub mod join;
pub mod perimeter;
pub mod shapefile;

pub use dictionary::{parse_data_dictionary, DataDictionary, DictionaryError};
pub use geometry::{parse_polygon_text, polygon_centroid, Centroid, Geometry, GeometryError, Polygon};
pub use join::{
    join_geometry, read_geometry_csv, read_shapefile_subset, GeometryEntry, GeometryTable, JoinReport, JoinedRecord,
};
pub use perimeter::{normalize_name, parse_perimeter_csv, write_perimeter_csv, CsvError, RawFireRecord};
pub use shapefile::{write_shapefile, ShapefileError};
