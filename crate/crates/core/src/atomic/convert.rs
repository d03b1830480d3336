use std::collections::HashMap;
use std::io::Read;

use chrono::TimeZone;

use super::*;

/// How raw time cells are encoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFormat {
    /// `2020-01-01T00:00:00Z`, RFC 3339 with offset, or `2020-01-01 00:00:00` (UTC).
    #[default]
    Iso,
    /// Integer seconds since the Unix epoch.
    Epoch,
    /// A chrono format string, interpreted as UTC.
    Custom(String),
}

impl TimeFormat {
    fn parse(&self, raw: &str) -> Option<Timestamp> {
        let raw = raw.trim();
        match self {
            TimeFormat::Iso => parse_time(raw)
                .or_else(|| {
                    DateTime::parse_from_rfc3339(raw)
                        .ok()
                        .map(|t| t.with_timezone(&Utc))
                })
                .or_else(|| {
                    NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S")
                        .ok()
                        .map(|n| n.and_utc())
                }),
            TimeFormat::Epoch => raw
                .parse::<i64>()
                .ok()
                .and_then(|s| Utc.timestamp_opt(s, 0).single()),
            TimeFormat::Custom(fmt) => NaiveDateTime::parse_from_str(raw, fmt)
                .ok()
                .map(|n| n.and_utc()),
        }
    }
}

/// Column mapping from a raw CSV onto atomic tables. Mandatory fields are
/// optional here so that a missing mapping surfaces as
/// [`FormatError::UnmappedMandatoryColumn`] instead of a deserialization error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum ConversionSpec {
    /// One `.dyna` state row per raw row.
    State {
        entity: Option<String>,
        time: Option<String>,
        #[serde(default)]
        time_format: TimeFormat,
        /// Raw columns to keep as properties; empty keeps every unmapped column.
        #[serde(default)]
        properties: Vec<String>,
    },
    /// GPS check-ins: one `.geo` Point per distinct (lon, lat) and one
    /// `.dyna` trajectory row per raw row, pointing at that Point.
    Trajectory {
        user: Option<String>,
        lat: Option<String>,
        lon: Option<String>,
        time: Option<String>,
        #[serde(default)]
        time_format: TimeFormat,
        #[serde(default)]
        properties: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvertedTables {
    pub geo: Option<Vec<GeoUnit>>,
    pub dyna: Vec<DynaRecord>,
}

impl ConvertedTables {
    pub fn into_dataset(self, manifest: Manifest) -> AtomicDataset {
        let mut ds = AtomicDataset::new(manifest);
        ds.geo = self.geo;
        ds.dyna = Some(self.dyna);
        ds
    }
}

fn mapped<'a>(field: &str, column: &'a Option<String>) -> Result<&'a str> {
    column
        .as_deref()
        .ok_or_else(|| FormatError::UnmappedMandatoryColumn(field.into()))
}

fn column_index(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| FormatError::Raw(format!("raw header has no column `{name}`")))
}

fn property_columns(
    header: &csv::StringRecord,
    requested: &[String],
    used: &[usize],
) -> Result<Vec<(usize, String)>> {
    if requested.is_empty() {
        Ok(header
            .iter()
            .enumerate()
            .filter(|(i, _)| !used.contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .collect())
    } else {
        requested
            .iter()
            .map(|name| Ok((column_index(header, name)?, name.clone())))
            .collect()
    }
}

fn raw_time(fmt: &TimeFormat, raw: &str, row: usize, column: &str) -> Result<Timestamp> {
    fmt.parse(raw).ok_or_else(|| FormatError::BadTimestamp {
        table: AtomicKind::Dyna,
        row,
        column: column.into(),
        value: raw.into(),
    })
}

/// Convert a raw CSV (with header) into atomic tables.
pub fn convert_raw_csv(spec: &ConversionSpec, source: impl Read) -> Result<ConvertedTables> {
    // Resolve the mapping before touching the input.
    match spec {
        ConversionSpec::State { entity, time, .. } => {
            mapped("entity_id", entity)?;
            mapped("time", time)?;
        }
        ConversionSpec::Trajectory {
            user,
            lat,
            lon,
            time,
            ..
        } => {
            mapped("entity_id", user)?;
            mapped("lat", lat)?;
            mapped("lon", lon)?;
            mapped("time", time)?;
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| FormatError::Raw(e.to_string()))?
        .clone();
    let mut out = ConvertedTables::default();

    match spec {
        ConversionSpec::State {
            entity,
            time,
            time_format,
            properties,
        } => {
            let (entity, time) = (mapped("entity_id", entity)?, mapped("time", time)?);
            let ei = column_index(&header, entity)?;
            let ti = column_index(&header, time)?;
            let props = property_columns(&header, properties, &[ei, ti])?;
            for (i, rec) in reader.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| FormatError::Raw(format!("row {row}: {e}")))?;
                out.dyna.push(DynaRecord {
                    dyna_id: i.to_string(),
                    dyna_type: DynaType::State,
                    time: raw_time(time_format, &rec[ti], row, time)?,
                    entity_id: rec[ei].to_string(),
                    location: None,
                    properties: props
                        .iter()
                        .filter_map(|(c, n)| Scalar::infer(&rec[*c]).map(|v| (n.clone(), v)))
                        .collect(),
                });
            }
        }
        ConversionSpec::Trajectory {
            user,
            lat,
            lon,
            time,
            time_format,
            properties,
        } => {
            let ui = column_index(&header, mapped("entity_id", user)?)?;
            let lat_col = mapped("lat", lat)?;
            let lon_col = mapped("lon", lon)?;
            let lai = column_index(&header, lat_col)?;
            let loi = column_index(&header, lon_col)?;
            let time = mapped("time", time)?;
            let ti = column_index(&header, time)?;
            let props = property_columns(&header, properties, &[ui, lai, loi, ti])?;

            let mut geo = Vec::new();
            let mut by_coord: HashMap<(u64, u64), String> = HashMap::new();
            for (i, rec) in reader.records().enumerate() {
                let row = i + 1;
                let rec = rec.map_err(|e| FormatError::Raw(format!("row {row}: {e}")))?;
                let number = |c: usize, name: &str| {
                    rec[c]
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| FormatError::BadCoordinate {
                            table: AtomicKind::Geo,
                            row,
                            column: name.into(),
                            reason: format!("`{}` is not a number", &rec[c]),
                        })
                };
                let coord = Coord::new(number(loi, lon_col)?, number(lai, lat_col)?);
                if !coord.in_bounds() {
                    return Err(FormatError::BadCoordinate {
                        table: AtomicKind::Geo,
                        row,
                        column: lat_col.into(),
                        reason: format!("({}, {}) out of range", coord.lon, coord.lat),
                    });
                }
                // +0.0 normalizes -0.0 so both map to one location
                let key = ((coord.lon + 0.0).to_bits(), (coord.lat + 0.0).to_bits());
                let location = by_coord
                    .entry(key)
                    .or_insert_with(|| {
                        let id = format!("loc{}", geo.len());
                        geo.push(GeoUnit {
                            geo_id: id.clone(),
                            geo_type: GeoType::Point,
                            coordinates: vec![coord],
                            properties: Properties::new(),
                        });
                        id
                    })
                    .clone();
                out.dyna.push(DynaRecord {
                    dyna_id: i.to_string(),
                    dyna_type: DynaType::Trajectory,
                    time: raw_time(time_format, &rec[ti], row, time)?,
                    entity_id: rec[ui].to_string(),
                    location: Some(location),
                    properties: props
                        .iter()
                        .filter_map(|(c, n)| Scalar::infer(&rec[*c]).map(|v| (n.clone(), v)))
                        .collect(),
                });
            }
            out.geo = Some(geo);
        }
    }
    Ok(out)
}
