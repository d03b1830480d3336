use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::*;
use crate::exec::Execution;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u32,
    pub cols: u32,
}

/// Declarations the tables themselves cannot carry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_secs: Option<u64>,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_order: Option<Vec<String>>,
}

/// A bundle of atomic tables plus its manifest. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicDataset {
    pub manifest: Manifest,
    pub geo: Option<Vec<GeoUnit>>,
    pub usr: Option<Vec<UserUnit>>,
    pub rel: Option<Vec<RelationRecord>>,
    pub dyna: Option<Vec<DynaRecord>>,
    pub grid: Option<Vec<GridDynaRecord>>,
    pub od: Option<Vec<OdDynaRecord>>,
    pub gridod: Option<Vec<GridOdDynaRecord>>,
    pub ext: Option<Vec<ExtRecord>>,
}

impl AtomicDataset {
    pub fn new(manifest: Manifest) -> Self {
        AtomicDataset {
            manifest,
            ..Default::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    pub fn set_table(&mut self, table: AnyTable) {
        match table {
            AnyTable::Geo(v) => self.geo = Some(v),
            AnyTable::Usr(v) => self.usr = Some(v),
            AnyTable::Rel(v) => self.rel = Some(v),
            AnyTable::Dyna(v) => self.dyna = Some(v),
            AnyTable::Grid(v) => self.grid = Some(v),
            AnyTable::Od(v) => self.od = Some(v),
            AnyTable::GridOd(v) => self.gridod = Some(v),
            AnyTable::Ext(v) => self.ext = Some(v),
        }
    }

    /// Present tables, in canonical kind order.
    pub fn tables(&self) -> Vec<AnyTable> {
        let mut out = Vec::new();
        if let Some(v) = &self.geo {
            out.push(AnyTable::Geo(v.clone()));
        }
        if let Some(v) = &self.usr {
            out.push(AnyTable::Usr(v.clone()));
        }
        if let Some(v) = &self.rel {
            out.push(AnyTable::Rel(v.clone()));
        }
        if let Some(v) = &self.dyna {
            out.push(AnyTable::Dyna(v.clone()));
        }
        if let Some(v) = &self.grid {
            out.push(AnyTable::Grid(v.clone()));
        }
        if let Some(v) = &self.od {
            out.push(AnyTable::Od(v.clone()));
        }
        if let Some(v) = &self.gridod {
            out.push(AnyTable::GridOd(v.clone()));
        }
        if let Some(v) = &self.ext {
            out.push(AnyTable::Ext(v.clone()));
        }
        out
    }

    pub fn table_len(&self, kind: AtomicKind) -> Option<usize> {
        match kind {
            AtomicKind::Geo => self.geo.as_ref().map(Vec::len),
            AtomicKind::Usr => self.usr.as_ref().map(Vec::len),
            AtomicKind::Rel => self.rel.as_ref().map(Vec::len),
            AtomicKind::Dyna => self.dyna.as_ref().map(Vec::len),
            AtomicKind::Grid => self.grid.as_ref().map(Vec::len),
            AtomicKind::Od => self.od.as_ref().map(Vec::len),
            AtomicKind::GridOd => self.gridod.as_ref().map(Vec::len),
            AtomicKind::Ext => self.ext.as_ref().map(Vec::len),
        }
    }

    pub fn table_count(&self) -> usize {
        AtomicKind::ALL
            .iter()
            .filter(|k| self.table_len(**k).is_some())
            .count()
    }

    /// Node ordering: the manifest's if declared, else `.geo` row order.
    pub fn geo_order(&self) -> Vec<String> {
        if let Some(order) = &self.manifest.geo_order {
            return order.clone();
        }
        self.geo
            .as_ref()
            .map(|g| g.iter().map(|u| u.geo_id.clone()).collect())
            .unwrap_or_default()
    }
}

fn table_path(dir: &Path, name: &str, kind: AtomicKind) -> std::path::PathBuf {
    dir.join(format!("{name}.{}", kind.suffix()))
}

/// Write `manifest.json` and one file per present table.
pub fn save_dataset(ds: &AtomicDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::to_string_pretty(&ds.manifest)
        .map_err(|e| FormatError::BadManifest(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
    for table in ds.tables() {
        let file = File::create(table_path(dir, ds.name(), table.kind()))?;
        write_any(&table, BufWriter::new(file))?;
    }
    Ok(())
}

/// Load, validate, and return the dataset together with its full report
/// (warnings included). Validation errors abort the load.
pub fn load_dataset_with_report(
    dir: impl AsRef<Path>,
) -> Result<(AtomicDataset, ValidationReport)> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(FormatError::MissingManifest(manifest_path));
    }
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(&manifest_path)?))
        .map_err(|e| FormatError::BadManifest(e.to_string()))?;

    let present: Vec<(AtomicKind, std::path::PathBuf)> = AtomicKind::ALL
        .into_iter()
        .map(|k| (k, table_path(dir, &manifest.name, k)))
        .filter(|(_, p)| p.is_file())
        .collect();
    let tables = Execution::default().try_map(&present, |(kind, path)| {
        parse_any(*kind, BufReader::new(File::open(path)?))
    })?;

    let mut ds = AtomicDataset::new(manifest);
    for t in tables {
        ds.set_table(t);
    }
    let report = validate_dataset(&ds);
    if !report.is_ok() {
        return Err(FormatError::ValidationFailed(report));
    }
    Ok((ds, report))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<AtomicDataset> {
    load_dataset_with_report(dir).map(|(ds, _)| ds)
}
