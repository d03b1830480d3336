//! `validate`, `stats` and `convert`.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Serialize;

use stkit_core::atomic::{
    convert_raw_csv, format_time, load_dataset_with_report, save_dataset, AtomicDataset,
    AtomicKind, ConversionSpec, FormatError, Manifest, Timestamp, ValidationReport,
};

use crate::error::{BenchError, Result};

/// Full validation report, including errors that would abort a load.
pub fn cmd_validate(dir: &Path) -> Result<ValidationReport> {
    match load_dataset_with_report(dir) {
        Ok((_, report)) => Ok(report),
        Err(FormatError::ValidationFailed(report)) => Ok(report),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    /// Row count per table suffix (`geo`, `dyna`, ...); absent tables are omitted.
    pub rows: Vec<(String, usize)>,
    pub first_time: Option<String>,
    pub last_time: Option<String>,
    pub interval_secs: Option<u64>,
}

impl DatasetStats {
    pub fn count(&self, suffix: &str) -> Option<usize> {
        self.rows.iter().find(|(s, _)| s == suffix).map(|(_, n)| *n)
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {}", self.name)?;
        for (suffix, n) in &self.rows {
            let label = format!("#{}", suffix.to_uppercase());
            writeln!(f, "{label:<8} {n}")?;
        }
        if let (Some(a), Some(b)) = (&self.first_time, &self.last_time) {
            writeln!(f, "span     {a} .. {b}")?;
        }
        if let Some(i) = self.interval_secs {
            writeln!(f, "interval {i}s")?;
        }
        Ok(())
    }
}

pub fn dataset_stats(ds: &AtomicDataset) -> DatasetStats {
    let rows = AtomicKind::ALL
        .into_iter()
        .filter_map(|k| ds.table_len(k).map(|n| (k.suffix().to_string(), n)))
        .collect();
    let times: Vec<Timestamp> = ds
        .dyna
        .iter()
        .flatten()
        .map(|r| r.time)
        .chain(ds.grid.iter().flatten().map(|r| r.time))
        .chain(ds.od.iter().flatten().map(|r| r.time))
        .chain(ds.gridod.iter().flatten().map(|r| r.time))
        .chain(ds.ext.iter().flatten().map(|r| r.time))
        .collect();
    DatasetStats {
        name: ds.name().to_string(),
        rows,
        first_time: times.iter().min().map(format_time),
        last_time: times.iter().max().map(format_time),
        interval_secs: ds.manifest.interval_secs,
    }
}

pub fn cmd_stats(dir: &Path) -> Result<DatasetStats> {
    let (ds, _) = load_dataset_with_report(dir)?;
    Ok(dataset_stats(&ds))
}

/// Convert a raw CSV with a JSON column mapping, write the dataset to
/// `out_dir` and return its validation report.
pub fn cmd_convert(
    raw: &Path,
    spec_path: &Path,
    manifest: Manifest,
    out_dir: &Path,
) -> Result<ValidationReport> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| BenchError::BadConfigFile {
        path: spec_path.into(),
        reason: e.to_string(),
    })?;
    let spec: ConversionSpec =
        serde_json::from_str(&text).map_err(|e| BenchError::BadConfigFile {
            path: spec_path.into(),
            reason: e.to_string(),
        })?;
    let file = File::open(raw).map_err(BenchError::io(raw))?;
    let tables = convert_raw_csv(&spec, BufReader::new(file))?;
    std::fs::create_dir_all(out_dir).map_err(BenchError::io(out_dir))?;
    save_dataset(&tables.into_dataset(manifest), out_dir)?;
    cmd_validate(out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_synthetic, SyntheticKind};
    use serde_json::json;

    #[test]
    fn stats_match_table_lengths() {
        let g = generate_synthetic(SyntheticKind::GraphFlow, &json!({"nodes": 5, "days": 1}), 1)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        g.save(dir.path()).unwrap();
        let s = cmd_stats(dir.path()).unwrap();
        assert_eq!(s.count("geo"), Some(5));
        assert_eq!(s.count("dyna"), g.dataset.dyna.as_ref().map(Vec::len));
        assert_eq!(s.first_time.as_deref(), Some("2020-01-01T00:00:00Z"));
        assert!(s.to_string().contains("#GEO"));
    }

    #[test]
    fn validate_reports_errors_without_failing() {
        let g = generate_synthetic(SyntheticKind::GraphFlow, &json!({"nodes": 3, "days": 1}), 1)
            .unwrap();
        let mut ds = g.dataset.clone();
        // a dyna row pointing at an unknown entity
        ds.dyna.as_mut().unwrap()[0].entity_id = "ghost".into();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let report = cmd_validate(dir.path()).unwrap();
        assert!(!report.is_ok());
    }

    #[test]
    fn convert_then_validate_is_clean() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.csv");
        std::fs::write(
            &raw,
            "uid,lat,lon,t\n1,39.9,116.4,1577836800\n1,39.91,116.41,1577840400\n",
        )
        .unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(
            &spec,
            r#"{"target": "trajectory", "user": "uid", "lat": "lat", "lon": "lon", "time": "t", "time_format": "epoch"}"#,
        )
        .unwrap();
        let out = dir.path().join("out");
        let manifest = Manifest {
            name: "raw".into(),
            ..Default::default()
        };
        let report = cmd_convert(&raw, &spec, manifest, &out).unwrap();
        assert!(report.is_ok(), "{report:?}");
        assert_eq!(cmd_stats(&out).unwrap().count("dyna"), Some(2));
    }
}
