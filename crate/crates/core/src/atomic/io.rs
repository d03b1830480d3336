use std::collections::HashSet;
use std::io::{Read, Write};

use super::*;

/// One row type of an atomic file.
pub trait AtomicRecord: Sized {
    const KIND: AtomicKind;

    /// Optional columns that sit between the mandatory and property columns.
    fn reserved_columns() -> &'static [&'static str] {
        &[]
    }

    /// Column whose value must be unique across the table.
    fn id_column() -> &'static str;

    /// Uniqueness key of this row.
    fn id_key(&self) -> String;

    fn from_cells(
        row: usize,
        mandatory: &[&str],
        reserved: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self>;

    fn mandatory_cells(&self) -> Vec<String>;

    fn reserved_cells(&self) -> Vec<Option<String>> {
        Vec::new()
    }

    fn properties(&self) -> &Properties;
}

fn need_id(kind: AtomicKind, row: usize, column: &str, value: &str) -> Result<String> {
    if value.is_empty() {
        return Err(FormatError::BadValue {
            table: kind,
            row,
            column: column.into(),
            reason: "empty identifier".into(),
        });
    }
    Ok(value.to_string())
}

fn need_time(kind: AtomicKind, row: usize, value: &str) -> Result<Timestamp> {
    parse_time(value).ok_or_else(|| FormatError::BadTimestamp {
        table: kind,
        row,
        column: "time".into(),
        value: value.into(),
    })
}

fn need_index(kind: AtomicKind, row: usize, column: &str, value: &str) -> Result<u32> {
    value.parse::<u32>().map_err(|_| FormatError::BadValue {
        table: kind,
        row,
        column: column.into(),
        reason: format!("expected non-negative integer, got `{value}`"),
    })
}

fn need_dyna_type(kind: AtomicKind, row: usize, value: &str) -> Result<DynaType> {
    DynaType::parse(value).ok_or_else(|| FormatError::BadValue {
        table: kind,
        row,
        column: "type".into(),
        reason: format!("expected state or trajectory, got `{value}`"),
    })
}

fn parse_coordinates(row: usize, geo_type: GeoType, raw: &str) -> Result<Vec<Coord>> {
    let bad = |reason: String| FormatError::BadCoordinate {
        table: AtomicKind::Geo,
        row,
        column: "coordinates".into(),
        reason,
    };
    let value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| bad(format!("not a JSON array: {e}")))?;
    let pair = |v: &serde_json::Value| -> Result<Coord> {
        match v.as_array().map(|a| a.as_slice()) {
            Some([lon, lat]) => match (lon.as_f64(), lat.as_f64()) {
                (Some(lon), Some(lat)) => Ok(Coord { lon, lat }),
                _ => Err(bad("coordinate values must be numbers".into())),
            },
            _ => Err(bad("expected a [lon,lat] pair".into())),
        }
    };
    let list = |v: &serde_json::Value| -> Result<Vec<Coord>> {
        v.as_array()
            .ok_or_else(|| bad("expected a list of [lon,lat] pairs".into()))?
            .iter()
            .map(pair)
            .collect()
    };
    let coords = match geo_type {
        GeoType::Point => vec![pair(&value)?],
        GeoType::LineString => list(&value)?,
        GeoType::Polygon => match value.as_array().map(|a| a.as_slice()) {
            Some([ring]) => list(ring)?,
            _ => return Err(bad("Polygon expects exactly one ring".into())),
        },
    };
    let unit = GeoUnit {
        geo_id: String::new(),
        geo_type,
        coordinates: coords,
        properties: Properties::new(),
    };
    if let Some(problem) = unit.geometry_problem() {
        return Err(bad(problem));
    }
    Ok(unit.coordinates)
}

fn encode_coordinates(geo_type: GeoType, coords: &[Coord]) -> String {
    let pairs: Vec<[f64; 2]> = coords.iter().map(|c| [c.lon, c.lat]).collect();
    let json = match geo_type {
        GeoType::Point => serde_json::to_string(&pairs.first().copied().unwrap_or([0.0, 0.0])),
        GeoType::LineString => serde_json::to_string(&pairs),
        GeoType::Polygon => serde_json::to_string(&[pairs]),
    };
    json.expect("coordinate arrays always serialize")
}

impl AtomicRecord for GeoUnit {
    const KIND: AtomicKind = AtomicKind::Geo;

    fn id_column() -> &'static str {
        "geo_id"
    }

    fn id_key(&self) -> String {
        self.geo_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        let geo_type = GeoType::parse(m[1]).ok_or_else(|| FormatError::BadValue {
            table: Self::KIND,
            row,
            column: "type".into(),
            reason: format!("expected Point, LineString or Polygon, got `{}`", m[1]),
        })?;
        Ok(GeoUnit {
            geo_id: need_id(Self::KIND, row, "geo_id", m[0])?,
            geo_type,
            coordinates: parse_coordinates(row, geo_type, m[2])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.geo_id.clone(),
            self.geo_type.as_str().to_string(),
            encode_coordinates(self.geo_type, &self.coordinates),
        ]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for UserUnit {
    const KIND: AtomicKind = AtomicKind::Usr;

    fn id_column() -> &'static str {
        "usr_id"
    }

    fn id_key(&self) -> String {
        self.usr_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(UserUnit {
            usr_id: need_id(Self::KIND, row, "usr_id", m[0])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![self.usr_id.clone()]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for RelationRecord {
    const KIND: AtomicKind = AtomicKind::Rel;

    fn id_column() -> &'static str {
        "rel_id"
    }

    fn id_key(&self) -> String {
        self.rel_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        let rel_type = RelType::parse(m[1]).ok_or_else(|| FormatError::BadValue {
            table: Self::KIND,
            row,
            column: "type".into(),
            reason: format!("expected geo, usr or usr2geo, got `{}`", m[1]),
        })?;
        Ok(RelationRecord {
            rel_id: need_id(Self::KIND, row, "rel_id", m[0])?,
            rel_type,
            origin_id: need_id(Self::KIND, row, "origin_id", m[2])?,
            des_id: need_id(Self::KIND, row, "des_id", m[3])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.rel_id.clone(),
            self.rel_type.as_str().to_string(),
            self.origin_id.clone(),
            self.des_id.clone(),
        ]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for DynaRecord {
    const KIND: AtomicKind = AtomicKind::Dyna;

    fn reserved_columns() -> &'static [&'static str] {
        &["location"]
    }

    fn id_column() -> &'static str {
        "dyna_id"
    }

    fn id_key(&self) -> String {
        self.dyna_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        r: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(DynaRecord {
            dyna_id: need_id(Self::KIND, row, "dyna_id", m[0])?,
            dyna_type: need_dyna_type(Self::KIND, row, m[1])?,
            time: need_time(Self::KIND, row, m[2])?,
            entity_id: need_id(Self::KIND, row, "entity_id", m[3])?,
            location: r
                .first()
                .copied()
                .flatten()
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.dyna_id.clone(),
            self.dyna_type.as_str().to_string(),
            format_time(&self.time),
            self.entity_id.clone(),
        ]
    }

    fn reserved_cells(&self) -> Vec<Option<String>> {
        vec![self.location.clone()]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for GridDynaRecord {
    const KIND: AtomicKind = AtomicKind::Grid;

    fn id_column() -> &'static str {
        "dyna_id"
    }

    fn id_key(&self) -> String {
        self.dyna_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(GridDynaRecord {
            dyna_id: need_id(Self::KIND, row, "dyna_id", m[0])?,
            dyna_type: need_dyna_type(Self::KIND, row, m[1])?,
            time: need_time(Self::KIND, row, m[2])?,
            row_id: need_index(Self::KIND, row, "row_id", m[3])?,
            col_id: need_index(Self::KIND, row, "col_id", m[4])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.dyna_id.clone(),
            self.dyna_type.as_str().to_string(),
            format_time(&self.time),
            self.row_id.to_string(),
            self.col_id.to_string(),
        ]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for OdDynaRecord {
    const KIND: AtomicKind = AtomicKind::Od;

    fn id_column() -> &'static str {
        "dyna_id"
    }

    fn id_key(&self) -> String {
        self.dyna_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(OdDynaRecord {
            dyna_id: need_id(Self::KIND, row, "dyna_id", m[0])?,
            dyna_type: need_dyna_type(Self::KIND, row, m[1])?,
            time: need_time(Self::KIND, row, m[2])?,
            origin_id: need_id(Self::KIND, row, "origin_id", m[3])?,
            des_id: need_id(Self::KIND, row, "des_id", m[4])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.dyna_id.clone(),
            self.dyna_type.as_str().to_string(),
            format_time(&self.time),
            self.origin_id.clone(),
            self.des_id.clone(),
        ]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for GridOdDynaRecord {
    const KIND: AtomicKind = AtomicKind::GridOd;

    fn id_column() -> &'static str {
        "dyna_id"
    }

    fn id_key(&self) -> String {
        self.dyna_id.clone()
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(GridOdDynaRecord {
            dyna_id: need_id(Self::KIND, row, "dyna_id", m[0])?,
            dyna_type: need_dyna_type(Self::KIND, row, m[1])?,
            time: need_time(Self::KIND, row, m[2])?,
            origin_row_id: need_index(Self::KIND, row, "origin_row_id", m[3])?,
            origin_col_id: need_index(Self::KIND, row, "origin_col_id", m[4])?,
            des_row_id: need_index(Self::KIND, row, "des_row_id", m[5])?,
            des_col_id: need_index(Self::KIND, row, "des_col_id", m[6])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![
            self.dyna_id.clone(),
            self.dyna_type.as_str().to_string(),
            format_time(&self.time),
            self.origin_row_id.to_string(),
            self.origin_col_id.to_string(),
            self.des_row_id.to_string(),
            self.des_col_id.to_string(),
        ]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

impl AtomicRecord for ExtRecord {
    const KIND: AtomicKind = AtomicKind::Ext;

    fn id_column() -> &'static str {
        "ext_id"
    }

    // ext ids only need to be unique per timestamp
    fn id_key(&self) -> String {
        format!("{}@{}", self.ext_id, format_time(&self.time))
    }

    fn from_cells(
        row: usize,
        m: &[&str],
        _: &[Option<&str>],
        properties: Properties,
    ) -> Result<Self> {
        Ok(ExtRecord {
            ext_id: need_id(Self::KIND, row, "ext_id", m[0])?,
            time: need_time(Self::KIND, row, m[1])?,
            properties,
        })
    }

    fn mandatory_cells(&self) -> Vec<String> {
        vec![self.ext_id.clone(), format_time(&self.time)]
    }

    fn properties(&self) -> &Properties {
        &self.properties
    }
}

struct Layout {
    reserved: Vec<Option<usize>>,
    properties: Vec<(usize, String)>,
}

fn read_header<R: AtomicRecord>(header: &csv::StringRecord) -> Result<Layout> {
    let kind = R::KIND;
    let mandatory = kind.mandatory_columns();
    for (position, column) in mandatory.iter().enumerate() {
        if header.get(position) != Some(*column) {
            return Err(FormatError::MissingColumn {
                table: kind,
                column: column.to_string(),
                position,
            });
        }
    }
    let mut next = mandatory.len();
    let mut reserved = Vec::new();
    for name in R::reserved_columns() {
        if header.get(next) == Some(*name) {
            reserved.push(Some(next));
            next += 1;
        } else {
            reserved.push(None);
        }
    }
    let mut seen: HashSet<&str> = mandatory.iter().copied().collect();
    seen.extend(R::reserved_columns().iter().copied());
    let mut properties = Vec::new();
    for (i, name) in header.iter().enumerate().skip(next) {
        if name.is_empty() {
            return Err(FormatError::BadHeader {
                table: kind,
                reason: format!("empty column name at position {i}"),
            });
        }
        if !seen.insert(name) {
            return Err(FormatError::BadHeader {
                table: kind,
                reason: format!("duplicate or reserved column name `{name}`"),
            });
        }
        properties.push((i, name.to_string()));
    }
    Ok(Layout {
        reserved,
        properties,
    })
}

/// Parse one atomic table. Rows keep file order; the first faulty row aborts
/// the parse with an error naming table, row (1-based, header excluded) and
/// column.
pub fn parse_table<R: AtomicRecord>(source: impl Read) -> Result<Vec<R>> {
    let kind = R::KIND;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|source| FormatError::Csv {
            table: kind,
            row: 0,
            source,
        })?
        .clone();
    let layout = read_header::<R>(&header)?;
    let n_mandatory = kind.mandatory_columns().len();

    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|source| FormatError::Csv {
            table: kind,
            row,
            source,
        })?;
        let mandatory: Vec<&str> = (0..n_mandatory).map(|c| &rec[c]).collect();
        let reserved: Vec<Option<&str>> =
            layout.reserved.iter().map(|p| p.map(|c| &rec[c])).collect();
        let properties: Properties = layout
            .properties
            .iter()
            .filter_map(|(c, name)| Scalar::infer(&rec[*c]).map(|v| (name.clone(), v)))
            .collect();
        let record = R::from_cells(row, &mandatory, &reserved, properties)?;
        let key = record.id_key();
        if !ids.insert(key) {
            return Err(FormatError::DuplicateId {
                table: kind,
                row,
                column: R::id_column().into(),
                id: mandatory[0].to_string(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Serialize records with mandatory columns first, then reserved columns in
/// use, then the union of property keys in first-seen order.
pub fn write_table<R: AtomicRecord>(records: &[R], sink: impl Write) -> Result<()> {
    let reserved_names = R::reserved_columns();
    let used_reserved: Vec<bool> = (0..reserved_names.len())
        .map(|j| {
            records
                .iter()
                .any(|r| r.reserved_cells().get(j).is_some_and(Option::is_some))
        })
        .collect();
    let mut property_keys: Vec<&str> = Vec::new();
    for r in records {
        for k in r.properties().keys() {
            if !property_keys.contains(&k) {
                property_keys.push(k);
            }
        }
    }

    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(sink);
    let csv_err = |source: csv::Error| FormatError::Csv {
        table: R::KIND,
        row: 0,
        source,
    };

    let mut header: Vec<&str> = R::KIND.mandatory_columns().to_vec();
    header.extend(
        reserved_names
            .iter()
            .zip(&used_reserved)
            .filter(|(_, used)| **used)
            .map(|(n, _)| *n),
    );
    header.extend(property_keys.iter().copied());
    writer.write_record(&header).map_err(csv_err)?;

    for r in records {
        let mut cells = r.mandatory_cells();
        for (cell, used) in r.reserved_cells().into_iter().zip(&used_reserved) {
            if *used {
                cells.push(cell.unwrap_or_default());
            }
        }
        let props = r.properties();
        cells.extend(
            property_keys
                .iter()
                .map(|k| props.get(k).map(Scalar::to_cell).unwrap_or_default()),
        );
        writer.write_record(&cells).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// A parsed table of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTable {
    Geo(Vec<GeoUnit>),
    Usr(Vec<UserUnit>),
    Rel(Vec<RelationRecord>),
    Dyna(Vec<DynaRecord>),
    Grid(Vec<GridDynaRecord>),
    Od(Vec<OdDynaRecord>),
    GridOd(Vec<GridOdDynaRecord>),
    Ext(Vec<ExtRecord>),
}

impl AnyTable {
    pub fn kind(&self) -> AtomicKind {
        match self {
            AnyTable::Geo(_) => AtomicKind::Geo,
            AnyTable::Usr(_) => AtomicKind::Usr,
            AnyTable::Rel(_) => AtomicKind::Rel,
            AnyTable::Dyna(_) => AtomicKind::Dyna,
            AnyTable::Grid(_) => AtomicKind::Grid,
            AnyTable::Od(_) => AtomicKind::Od,
            AnyTable::GridOd(_) => AtomicKind::GridOd,
            AnyTable::Ext(_) => AtomicKind::Ext,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyTable::Geo(v) => v.len(),
            AnyTable::Usr(v) => v.len(),
            AnyTable::Rel(v) => v.len(),
            AnyTable::Dyna(v) => v.len(),
            AnyTable::Grid(v) => v.len(),
            AnyTable::Od(v) => v.len(),
            AnyTable::GridOd(v) => v.len(),
            AnyTable::Ext(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn parse_any(kind: AtomicKind, source: impl Read) -> Result<AnyTable> {
    Ok(match kind {
        AtomicKind::Geo => AnyTable::Geo(parse_table(source)?),
        AtomicKind::Usr => AnyTable::Usr(parse_table(source)?),
        AtomicKind::Rel => AnyTable::Rel(parse_table(source)?),
        AtomicKind::Dyna => AnyTable::Dyna(parse_table(source)?),
        AtomicKind::Grid => AnyTable::Grid(parse_table(source)?),
        AtomicKind::Od => AnyTable::Od(parse_table(source)?),
        AtomicKind::GridOd => AnyTable::GridOd(parse_table(source)?),
        AtomicKind::Ext => AnyTable::Ext(parse_table(source)?),
    })
}

pub fn write_any(table: &AnyTable, sink: impl Write) -> Result<()> {
    match table {
        AnyTable::Geo(v) => write_table(v, sink),
        AnyTable::Usr(v) => write_table(v, sink),
        AnyTable::Rel(v) => write_table(v, sink),
        AnyTable::Dyna(v) => write_table(v, sink),
        AnyTable::Grid(v) => write_table(v, sink),
        AnyTable::Od(v) => write_table(v, sink),
        AnyTable::GridOd(v) => write_table(v, sink),
        AnyTable::Ext(v) => write_table(v, sink),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_string<R: AtomicRecord>(records: &[R]) -> String {
        let mut buf = Vec::new();
        write_table(records, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn geo_point_parses_and_writes_back_literally() {
        let src = "geo_id,type,coordinates,stop_kind\ng1,Point,\"[116.0,39.9]\",bus\n";
        let geo: Vec<GeoUnit> = parse_table(src.as_bytes()).unwrap();
        assert_eq!(
            geo,
            vec![GeoUnit {
                geo_id: "g1".into(),
                geo_type: GeoType::Point,
                coordinates: vec![Coord::new(116.0, 39.9)],
                properties: [("stop_kind", "bus")].into_iter().collect(),
            }]
        );
        assert_eq!(write_string(&geo), src);
    }

    #[test]
    fn dyna_state_row() {
        let src = "dyna_id,type,time,entity_id,flow\n0,state,2020-01-01T00:00:00Z,g1,5\n";
        let rows: Vec<DynaRecord> = parse_table(src.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].dyna_type, DynaType::State);
        assert_eq!(rows[0].entity_id, "g1");
        assert_eq!(rows[0].location, None);
        assert_eq!(rows[0].properties.len(), 1);
        assert_eq!(rows[0].properties.get_f64("flow"), Some(5.0));
    }

    #[test]
    fn trajectory_location_column() {
        let src = "dyna_id,type,time,entity_id,location\n0,trajectory,2020-01-01T00:00:00Z,u1,g7\n";
        let rows: Vec<DynaRecord> = parse_table(src.as_bytes()).unwrap();
        assert_eq!(rows[0].location.as_deref(), Some("g7"));
        assert!(rows[0].properties.is_empty());
        assert_eq!(write_string(&rows), src);
    }

    #[test]
    fn latitude_out_of_range() {
        let src = "geo_id,type,coordinates\ng1,Point,\"[116.0,95.0]\"\n";
        let err = parse_table::<GeoUnit>(src.as_bytes()).unwrap_err();
        assert!(
            matches!(err, FormatError::BadCoordinate { row: 1, ref column, .. } if column == "coordinates"),
            "{err:?}"
        );
    }

    #[test]
    fn header_errors() {
        let err = parse_table::<RelationRecord>("rel_id,type,des_id\n".as_bytes()).unwrap_err();
        assert!(
            matches!(err, FormatError::MissingColumn { ref column, position: 2, .. } if column == "origin_id")
        );
        let err = parse_table::<UserUnit>("usr_id,a,a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::BadHeader { .. }));
    }

    #[test]
    fn row_errors_are_located() {
        let src =
            "dyna_id,type,time,entity_id\n0,state,2020-01-01T00:00:00Z,g1\n1,state,yesterday,g1\n";
        let err = parse_table::<DynaRecord>(src.as_bytes()).unwrap_err();
        assert!(
            matches!(err, FormatError::BadTimestamp { row: 2, .. }),
            "{err:?}"
        );

        let src = "geo_id,type,coordinates\na,Point,\"[1,2]\"\na,Point,\"[1,2]\"\n";
        let err = parse_table::<GeoUnit>(src.as_bytes()).unwrap_err();
        assert!(
            matches!(err, FormatError::DuplicateId { row: 2, .. }),
            "{err:?}"
        );

        let src = "dyna_id,type,time,row_id,col_id\n0,state,2020-01-01T00:00:00Z,-1,0\n";
        let err = parse_table::<GridDynaRecord>(src.as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::BadValue { ref column, .. } if column == "row_id"));

        let src = "usr_id,a\nu1\n";
        let err = parse_table::<UserUnit>(src.as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::Csv { row: 1, .. }), "{err:?}");
    }

    #[test]
    fn ext_ids_unique_per_timestamp() {
        let src = "ext_id,time,temp\nw,2020-01-01T00:00:00Z,1\nw,2020-01-01T01:00:00Z,2\n";
        assert_eq!(parse_table::<ExtRecord>(src.as_bytes()).unwrap().len(), 2);
        let src = "ext_id,time,temp\nw,2020-01-01T00:00:00Z,1\nw,2020-01-01T00:00:00Z,2\n";
        assert!(parse_table::<ExtRecord>(src.as_bytes()).is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(
            write_string::<GridOdDynaRecord>(&[]),
            "dyna_id,type,time,origin_row_id,origin_col_id,des_row_id,des_col_id\n"
        );
        assert_eq!(write_string::<ExtRecord>(&[]), "ext_id,time\n");
    }

    #[test]
    fn crlf_is_accepted() {
        let src = "usr_id,age\r\nu1,30\r\nu2,41\r\n";
        let users: Vec<UserUnit> = parse_table(src.as_bytes()).unwrap();
        assert_eq!(users.len(), 2);
        assert_eq!(write_string(&users), "usr_id,age\nu1,30\nu2,41\n");
    }

    #[test]
    fn polygon_and_linestring_encoding() {
        let src = "geo_id,type,coordinates\nr,LineString,\"[[0.0,0.0],[0.5,1.0]]\"\np,Polygon,\"[[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,0.0]]]\"\n";
        let geo: Vec<GeoUnit> = parse_table(src.as_bytes()).unwrap();
        assert_eq!(geo[1].coordinates.len(), 4);
        assert_eq!(write_string(&geo), src);
    }
}
