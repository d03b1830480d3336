//! Atomic files: the CSV-based storage contract for spatial-temporal data.
//!
//! Eight file suffixes carry nine record kinds (`.dyna` holds both state rows
//! and trajectory rows, told apart by the mandatory `type` column). Every file
//! starts with the mandatory columns of its kind in a fixed order, followed by
//! free-form property columns.

mod convert;
mod dataset;
mod io;
mod validate;

use std::fmt;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

pub use convert::{convert_raw_csv, ConversionSpec, ConvertedTables, TimeFormat};
pub use dataset::{
    load_dataset, load_dataset_with_report, save_dataset, AtomicDataset, GridDims, Manifest,
    MANIFEST_FILE,
};
pub use io::{parse_any, parse_table, write_any, write_table, AnyTable, AtomicRecord};
pub use validate::{validate_dataset, Finding, Severity, ValidationReport};

pub type Timestamp = DateTime<Utc>;

pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_time(t: &Timestamp) -> String {
    t.format(TIME_FORMAT).to_string()
}

/// Strict `YYYY-MM-DDTHH:MM:SSZ` parse.
pub fn parse_time(s: &str) -> Option<Timestamp> {
    if s.len() != 20 {
        return None;
    }
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .ok()
        .map(|n| n.and_utc())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomicKind {
    Geo,
    Usr,
    Rel,
    Dyna,
    Grid,
    Od,
    GridOd,
    Ext,
}

impl AtomicKind {
    pub const ALL: [AtomicKind; 8] = [
        AtomicKind::Geo,
        AtomicKind::Usr,
        AtomicKind::Rel,
        AtomicKind::Dyna,
        AtomicKind::Grid,
        AtomicKind::Od,
        AtomicKind::GridOd,
        AtomicKind::Ext,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            AtomicKind::Geo => "geo",
            AtomicKind::Usr => "usr",
            AtomicKind::Rel => "rel",
            AtomicKind::Dyna => "dyna",
            AtomicKind::Grid => "grid",
            AtomicKind::Od => "od",
            AtomicKind::GridOd => "gridod",
            AtomicKind::Ext => "ext",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Self> {
        AtomicKind::ALL.into_iter().find(|k| k.suffix() == s)
    }

    /// Mandatory leading columns, verbatim and in order.
    pub fn mandatory_columns(self) -> &'static [&'static str] {
        match self {
            AtomicKind::Geo => &["geo_id", "type", "coordinates"],
            AtomicKind::Usr => &["usr_id"],
            AtomicKind::Rel => &["rel_id", "type", "origin_id", "des_id"],
            AtomicKind::Dyna => &["dyna_id", "type", "time", "entity_id"],
            AtomicKind::Grid => &["dyna_id", "type", "time", "row_id", "col_id"],
            AtomicKind::Od => &["dyna_id", "type", "time", "origin_id", "des_id"],
            AtomicKind::GridOd => &[
                "dyna_id",
                "type",
                "time",
                "origin_row_id",
                "origin_col_id",
                "des_row_id",
                "des_col_id",
            ],
            AtomicKind::Ext => &["ext_id", "time"],
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            AtomicKind::Dyna | AtomicKind::Grid | AtomicKind::Od | AtomicKind::GridOd
        )
    }
}

impl fmt::Display for AtomicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, ".{}", self.suffix())
    }
}

/// A property cell. Empty cells are absent rather than a null variant.
///
/// A cell that parses as a finite number is always a `Number`, so a `Text`
/// value holding a numeric literal does not survive a write/parse cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    /// Classify a raw cell. Returns `None` for an empty cell.
    pub fn infer(raw: &str) -> Option<Scalar> {
        if raw.is_empty() {
            return None;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(Scalar::Number(v)),
            _ => Some(Scalar::Text(raw.to_string())),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(v) => Some(*v),
            Scalar::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            Scalar::Number(_) => None,
        }
    }

    pub fn to_cell(&self) -> String {
        match self {
            Scalar::Number(v) => format_number(*v),
            Scalar::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_string())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Named property values in column order. Equality ignores order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Properties(Vec<(String, Scalar)>);

impl Properties {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&Scalar> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Scalar::as_f64)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Scalar>) {
        let key = key.into();
        let value = value.into();
        match self.0.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.0.push((key, value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<Scalar> {
        let pos = self.0.iter().position(|(k, _)| k == key)?;
        Some(self.0.remove(pos).1)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Scalar)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl PartialEq for Properties {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len() && self.0.iter().all(|(k, v)| other.get(k) == Some(v))
    }
}

impl<K: Into<String>, V: Into<Scalar>> FromIterator<(K, V)> for Properties {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut p = Properties::new();
        for (k, v) in iter {
            p.insert(k, v);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lon: f64,
    pub lat: f64,
}

impl Coord {
    pub fn new(lon: f64, lat: f64) -> Self {
        Coord { lon, lat }
    }

    pub fn in_bounds(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeoType {
    Point,
    LineString,
    Polygon,
}

impl GeoType {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoType::Point => "Point",
            GeoType::LineString => "LineString",
            GeoType::Polygon => "Polygon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Point" => Some(GeoType::Point),
            "LineString" => Some(GeoType::LineString),
            "Polygon" => Some(GeoType::Polygon),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoUnit {
    pub geo_id: String,
    pub geo_type: GeoType,
    pub coordinates: Vec<Coord>,
    pub properties: Properties,
}

impl GeoUnit {
    /// Shape check for the coordinate list; `None` when valid.
    pub fn geometry_problem(&self) -> Option<String> {
        if let Some(c) = self.coordinates.iter().find(|c| !c.in_bounds()) {
            return Some(format!("coordinate ({}, {}) out of range", c.lon, c.lat));
        }
        let n = self.coordinates.len();
        match self.geo_type {
            GeoType::Point if n != 1 => Some(format!("Point needs 1 coordinate, got {n}")),
            GeoType::LineString if n < 2 => {
                Some(format!("LineString needs at least 2 coordinates, got {n}"))
            }
            GeoType::Polygon if n < 4 => {
                Some(format!("Polygon needs at least 4 coordinates, got {n}"))
            }
            GeoType::Polygon if self.coordinates[0] != self.coordinates[n - 1] => {
                Some("Polygon ring is not closed".to_string())
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserUnit {
    pub usr_id: String,
    pub properties: Properties,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelType {
    Geo,
    Usr,
    Usr2Geo,
}

impl RelType {
    pub fn as_str(self) -> &'static str {
        match self {
            RelType::Geo => "geo",
            RelType::Usr => "usr",
            RelType::Usr2Geo => "usr2geo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "geo" => Some(RelType::Geo),
            "usr" => Some(RelType::Usr),
            "usr2geo" => Some(RelType::Usr2Geo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationRecord {
    pub rel_id: String,
    pub rel_type: RelType,
    pub origin_id: String,
    pub des_id: String,
    pub properties: Properties,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DynaType {
    State,
    Trajectory,
}

impl DynaType {
    pub fn as_str(self) -> &'static str {
        match self {
            DynaType::State => "state",
            DynaType::Trajectory => "trajectory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "state" => Some(DynaType::State),
            "trajectory" => Some(DynaType::Trajectory),
            _ => None,
        }
    }
}

/// A `.dyna` row. Trajectory rows may name the visited geo unit in the
/// reserved `location` column, which directly follows `entity_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynaRecord {
    pub dyna_id: String,
    pub dyna_type: DynaType,
    pub time: Timestamp,
    pub entity_id: String,
    pub location: Option<String>,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDynaRecord {
    pub dyna_id: String,
    pub dyna_type: DynaType,
    pub time: Timestamp,
    pub row_id: u32,
    pub col_id: u32,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdDynaRecord {
    pub dyna_id: String,
    pub dyna_type: DynaType,
    pub time: Timestamp,
    pub origin_id: String,
    pub des_id: String,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOdDynaRecord {
    pub dyna_id: String,
    pub dyna_type: DynaType,
    pub time: Timestamp,
    pub origin_row_id: u32,
    pub origin_col_id: u32,
    pub des_row_id: u32,
    pub des_col_id: u32,
    pub properties: Properties,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtRecord {
    pub ext_id: String,
    pub time: Timestamp,
    pub properties: Properties,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{table}: missing mandatory column `{column}` at header position {position}")]
    MissingColumn {
        table: AtomicKind,
        column: String,
        position: usize,
    },
    #[error("{table} row {row}, column `{column}`: bad timestamp `{value}`")]
    BadTimestamp {
        table: AtomicKind,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{table} row {row}, column `{column}`: {reason}")]
    BadCoordinate {
        table: AtomicKind,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{table} row {row}, column `{column}`: duplicate id `{id}`")]
    DuplicateId {
        table: AtomicKind,
        row: usize,
        column: String,
        id: String,
    },
    #[error("{table} row {row}, column `{column}`: {reason}")]
    BadValue {
        table: AtomicKind,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{table}: bad header: {reason}")]
    BadHeader { table: AtomicKind, reason: String },
    #[error("{table} row {row}: {source}")]
    Csv {
        table: AtomicKind,
        row: usize,
        #[source]
        source: csv::Error,
    },
    #[error("missing manifest {0}")]
    MissingManifest(std::path::PathBuf),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("dataset failed validation with {} error(s)", .0.errors().count())]
    ValidationFailed(ValidationReport),
    #[error("conversion spec does not map mandatory field `{0}`")]
    UnmappedMandatoryColumn(String),
    #[error("raw csv: {0}")]
    Raw(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;
