use std::collections::{HashMap, HashSet};
use std::fmt;

use super::io::AtomicRecord;
use super::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    /// Table suffix such as `.rel`, or `manifest`.
    pub table: String,
    /// 1-based data row, when the finding is about a single row.
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.row {
            Some(r) => write!(f, "{sev}: {} row {r}: {}", self.table, self.message),
            None => write!(f, "{sev}: {}: {}", self.table, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }

    fn push(
        &mut self,
        severity: Severity,
        table: impl fmt::Display,
        row: Option<usize>,
        message: String,
    ) {
        self.findings.push(Finding {
            severity,
            table: table.to_string(),
            row,
            message,
        });
    }

    fn error(&mut self, table: AtomicKind, row: usize, message: String) {
        self.push(Severity::Error, table, Some(row), message);
    }
}

fn id_set<'a, I: Iterator<Item = &'a str>>(ids: Option<I>) -> Option<HashSet<&'a str>> {
    ids.map(|it| it.collect())
}

fn check_duplicates<R: AtomicRecord>(records: &[R], report: &mut ValidationReport) {
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let key = r.id_key();
        if !seen.insert(key.clone()) {
            report.error(
                R::KIND,
                i + 1,
                format!("duplicate {} `{key}`", R::id_column()),
            );
        }
    }
}

fn resolve(
    ids: Option<&HashSet<&str>>,
    id: &str,
    what: &str,
    table_name: &str,
    kind: AtomicKind,
    row: usize,
    report: &mut ValidationReport,
) {
    match ids {
        Some(set) if set.contains(id) => {}
        Some(_) => report.error(
            kind,
            row,
            format!("{what} `{id}` not found in {table_name}"),
        ),
        None => report.error(
            kind,
            row,
            format!("{what} `{id}` cannot resolve: no {table_name} table"),
        ),
    }
}

/// Check every cross-table invariant. Findings are data; this never fails.
pub fn validate_dataset(ds: &AtomicDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let geo_ids = id_set(ds.geo.as_ref().map(|g| g.iter().map(|u| u.geo_id.as_str())));
    let usr_ids = id_set(ds.usr.as_ref().map(|u| u.iter().map(|u| u.usr_id.as_str())));

    if let Some(geo) = &ds.geo {
        check_duplicates(geo, &mut report);
        for (i, g) in geo.iter().enumerate() {
            if let Some(problem) = g.geometry_problem() {
                report.error(AtomicKind::Geo, i + 1, problem);
            }
        }
    }
    if let Some(usr) = &ds.usr {
        check_duplicates(usr, &mut report);
    }

    if let Some(rel) = &ds.rel {
        check_duplicates(rel, &mut report);
        for (i, r) in rel.iter().enumerate() {
            let (origin, des) = match r.rel_type {
                RelType::Geo => ((geo_ids.as_ref(), ".geo"), (geo_ids.as_ref(), ".geo")),
                RelType::Usr => ((usr_ids.as_ref(), ".usr"), (usr_ids.as_ref(), ".usr")),
                RelType::Usr2Geo => ((usr_ids.as_ref(), ".usr"), (geo_ids.as_ref(), ".geo")),
            };
            resolve(
                origin.0,
                &r.origin_id,
                "origin_id",
                origin.1,
                AtomicKind::Rel,
                i + 1,
                &mut report,
            );
            resolve(
                des.0,
                &r.des_id,
                "des_id",
                des.1,
                AtomicKind::Rel,
                i + 1,
                &mut report,
            );
        }
    }

    if let Some(dyna) = &ds.dyna {
        check_duplicates(dyna, &mut report);
        let mut last_time: HashMap<&str, Timestamp> = HashMap::new();
        for (i, d) in dyna.iter().enumerate() {
            let row = i + 1;
            match d.dyna_type {
                DynaType::State => {
                    if geo_ids.is_some() {
                        resolve(
                            geo_ids.as_ref(),
                            &d.entity_id,
                            "entity_id",
                            ".geo",
                            AtomicKind::Dyna,
                            row,
                            &mut report,
                        );
                    }
                }
                DynaType::Trajectory => {
                    if usr_ids.is_some() {
                        resolve(
                            usr_ids.as_ref(),
                            &d.entity_id,
                            "entity_id",
                            ".usr",
                            AtomicKind::Dyna,
                            row,
                            &mut report,
                        );
                    }
                    if let Some(loc) = &d.location {
                        resolve(
                            geo_ids.as_ref(),
                            loc,
                            "location",
                            ".geo",
                            AtomicKind::Dyna,
                            row,
                            &mut report,
                        );
                    }
                    if let Some(prev) = last_time.get(d.entity_id.as_str()) {
                        if d.time < *prev {
                            report.push(
                                Severity::Warning,
                                AtomicKind::Dyna,
                                Some(row),
                                format!(
                                    "trajectory of `{}` goes back in time ({} after {})",
                                    d.entity_id,
                                    format_time(&d.time),
                                    format_time(prev)
                                ),
                            );
                        }
                    }
                    last_time.insert(d.entity_id.as_str(), d.time);
                }
            }
        }
    }

    let grid_dims = ds.manifest.grid;
    let in_grid = |r: u32, c: u32| grid_dims.is_some_and(|g| r < g.rows && c < g.cols);
    if let Some(grid) = &ds.grid {
        check_duplicates(grid, &mut report);
        if grid_dims.is_none() {
            report.push(
                Severity::Error,
                "manifest",
                None,
                "grid table present but no grid dimensions declared".into(),
            );
        } else {
            for (i, g) in grid.iter().enumerate() {
                if !in_grid(g.row_id, g.col_id) {
                    report.error(
                        AtomicKind::Grid,
                        i + 1,
                        format!("cell ({}, {}) outside declared grid", g.row_id, g.col_id),
                    );
                }
            }
        }
    }
    if let Some(gridod) = &ds.gridod {
        check_duplicates(gridod, &mut report);
        if grid_dims.is_none() {
            report.push(
                Severity::Error,
                "manifest",
                None,
                "gridod table present but no grid dimensions declared".into(),
            );
        } else {
            for (i, g) in gridod.iter().enumerate() {
                if !in_grid(g.origin_row_id, g.origin_col_id)
                    || !in_grid(g.des_row_id, g.des_col_id)
                {
                    report.error(
                        AtomicKind::GridOd,
                        i + 1,
                        format!(
                            "pair ({}, {}) -> ({}, {}) outside declared grid",
                            g.origin_row_id, g.origin_col_id, g.des_row_id, g.des_col_id
                        ),
                    );
                }
            }
        }
    }
    if let Some(od) = &ds.od {
        check_duplicates(od, &mut report);
        for (i, o) in od.iter().enumerate() {
            resolve(
                geo_ids.as_ref(),
                &o.origin_id,
                "origin_id",
                ".geo",
                AtomicKind::Od,
                i + 1,
                &mut report,
            );
            resolve(
                geo_ids.as_ref(),
                &o.des_id,
                "des_id",
                ".geo",
                AtomicKind::Od,
                i + 1,
                &mut report,
            );
        }
    }
    if let Some(ext) = &ds.ext {
        check_duplicates(ext, &mut report);
    }

    if let Some(order) = &ds.manifest.geo_order {
        let mut seen = HashSet::new();
        for id in order {
            if !seen.insert(id.as_str()) {
                report.push(
                    Severity::Error,
                    "manifest",
                    None,
                    format!("geo_order lists `{id}` twice"),
                );
            }
            if let Some(ids) = &geo_ids {
                if !ids.contains(id.as_str()) {
                    report.push(
                        Severity::Error,
                        "manifest",
                        None,
                        format!("geo_order id `{id}` not in .geo"),
                    );
                }
            }
        }
    }

    let dynamic_present = AtomicKind::ALL
        .iter()
        .any(|k| k.is_dynamic() && ds.table_len(*k).is_some());
    if !dynamic_present {
        report.push(
            Severity::Warning,
            "dataset",
            None,
            "no dynamic table present".into(),
        );
    }
    for feature in &ds.manifest.features {
        let found = ds
            .dyna
            .iter()
            .flatten()
            .any(|r| r.properties.get(feature).is_some())
            || ds
                .grid
                .iter()
                .flatten()
                .any(|r| r.properties.get(feature).is_some())
            || ds
                .od
                .iter()
                .flatten()
                .any(|r| r.properties.get(feature).is_some())
            || ds
                .gridod
                .iter()
                .flatten()
                .any(|r| r.properties.get(feature).is_some());
        if !found {
            report.push(
                Severity::Warning,
                "manifest",
                None,
                format!("feature `{feature}` never observed"),
            );
        }
    }
    report
}
