//! Validated atomic tables to dense tensors, adjacency matrices and
//! trajectories.
//!
//! Tensors are time-major: `[T, spatial..., D]`. Every tensor travels with a
//! [`MaskTensor`] of identical shape; unobserved cells hold `0.0` with mask
//! `false`, and every consumer in this crate honors the mask.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use chrono::Duration;
use ndarray::{Array2, ArrayD, IxDyn};

use crate::atomic::{
    format_number, format_time, Coord, DynaRecord, DynaType, GridDims, GridDynaRecord,
    GridOdDynaRecord, OdDynaRecord, Properties, RelType, RelationRecord, Scalar, Timestamp,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("no state records to tensorize")]
    EmptyTable,
    #[error("time interval must be positive")]
    ZeroInterval,
    #[error("row {row}: time {time} is not on the {interval}s grid")]
    NonAlignedTimestamp {
        row: usize,
        time: String,
        interval: u64,
    },
    #[error("row {row}: time {time} falls outside the time axis")]
    OutsideAxis { row: usize, time: String },
    #[error("row {row}: second record for cell (slot {slot}, {key})")]
    DuplicateCell {
        row: usize,
        slot: usize,
        key: String,
    },
    #[error("row {row}: unknown entity `{id}`")]
    UnknownEntity { row: usize, id: String },
    #[error("feature `{0}` is not a property of any record")]
    UnknownFeature(String),
    #[error("row {row}: feature `{feature}` is not numeric")]
    NonNumericFeature { row: usize, feature: String },
    #[error("relation `{rel_id}` has negative weight {weight}")]
    NegativeWeight { rel_id: String, weight: f64 },
    #[error("relation `{rel_id}` has a non-numeric weight")]
    NonNumericWeight { rel_id: String },
    #[error("tensor has layout {0:?}, operation needs another")]
    WrongLayout(Layout),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// `T` equally spaced slots starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimeAxis {
    pub start: Timestamp,
    pub interval_secs: u64,
    pub len: usize,
}

impl TimeAxis {
    /// Slot of `t`, or `None` if off-grid or out of range.
    pub fn slot(&self, t: &Timestamp) -> Option<usize> {
        let delta = (*t - self.start).num_seconds();
        let interval = self.interval_secs as i64;
        if delta < 0 || delta % interval != 0 {
            return None;
        }
        let slot = (delta / interval) as usize;
        (slot < self.len).then_some(slot)
    }

    pub fn time_of(&self, slot: usize) -> Timestamp {
        self.start + Duration::seconds(slot as i64 * self.interval_secs as i64)
    }

    /// Fraction of the UTC day elapsed at `slot`, in `[0, 1)`.
    pub fn time_of_day(&self, slot: usize) -> f64 {
        let secs = self.time_of(slot).timestamp().rem_euclid(86_400);
        secs as f64 / 86_400.0
    }

    /// Slots per day when the interval divides a day evenly.
    pub fn slots_per_day(&self) -> Option<usize> {
        (86_400 % self.interval_secs == 0).then(|| (86_400 / self.interval_secs) as usize)
    }

    pub fn sub_axis(&self, from: usize, len: usize) -> TimeAxis {
        TimeAxis {
            start: self.time_of(from),
            interval_secs: self.interval_secs,
            len,
        }
    }
}

/// Time axis spanning `times`, starting at the earliest time floored to the
/// interval (relative to the Unix epoch).
pub fn build_time_axis<I>(times: I, interval_secs: u64) -> Result<TimeAxis>
where
    I: IntoIterator<Item = Timestamp>,
{
    if interval_secs == 0 {
        return Err(TensorError::ZeroInterval);
    }
    let times: Vec<Timestamp> = times.into_iter().collect();
    let (Some(min), Some(max)) = (times.iter().min(), times.iter().max()) else {
        return Err(TensorError::EmptyTable);
    };
    let interval = interval_secs as i64;
    let start = *min - Duration::seconds(min.timestamp().rem_euclid(interval));
    for (i, t) in times.iter().enumerate() {
        if (*t - start).num_seconds() % interval != 0 {
            return Err(TensorError::NonAlignedTimestamp {
                row: i + 1,
                time: format_time(t),
                interval: interval_secs,
            });
        }
    }
    let len = ((*max - start).num_seconds() / interval) as usize + 1;
    Ok(TimeAxis {
        start,
        interval_secs,
        len,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Layout {
    Graph { nodes: usize },
    Grid { rows: usize, cols: usize },
    Od { nodes: usize },
    GridOd { rows: usize, cols: usize },
}

impl Layout {
    pub fn spatial_dims(&self) -> Vec<usize> {
        match *self {
            Layout::Graph { nodes } => vec![nodes],
            Layout::Grid { rows, cols } => vec![rows, cols],
            Layout::Od { nodes } => vec![nodes, nodes],
            Layout::GridOd { rows, cols } => vec![rows, cols, rows, cols],
        }
    }

    pub fn spatial_size(&self) -> usize {
        self.spatial_dims().iter().product()
    }

    fn key_columns(&self) -> &'static [&'static str] {
        match self {
            Layout::Graph { .. } => &["node"],
            Layout::Grid { .. } => &["row", "col"],
            Layout::Od { .. } => &["origin", "des"],
            Layout::GridOd { .. } => &["origin_row", "origin_col", "des_row", "des_col"],
        }
    }
}

/// Observed/missing flags, same shape as the partner tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTensor(pub ArrayD<bool>);

impl MaskTensor {
    pub fn count(&self) -> usize {
        self.0.iter().filter(|m| **m).count()
    }
}

/// Dense labeled tensor of shape `[T, spatial..., D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct STTensor {
    pub layout: Layout,
    pub axis: TimeAxis,
    pub features: Vec<String>,
    /// Node labels for graph and OD layouts; empty for grids.
    pub geo_order: Vec<String>,
    pub values: ArrayD<f64>,
}

impl STTensor {
    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    fn spatial_label(&self, flat: usize) -> Vec<String> {
        let dims = self.layout.spatial_dims();
        let mut idx = vec![0; dims.len()];
        let mut rem = flat;
        for (i, d) in dims.iter().enumerate().rev() {
            idx[i] = rem % d;
            rem /= d;
        }
        match self.layout {
            Layout::Graph { .. } | Layout::Od { .. } => {
                idx.iter().map(|i| self.geo_order[*i].clone()).collect()
            }
            _ => idx.iter().map(usize::to_string).collect(),
        }
    }

    /// Scatter a graph tensor back into `.dyna` state records. Cells with no
    /// observed feature produce no record.
    pub fn to_state_records(&self, mask: &MaskTensor) -> Result<Vec<DynaRecord>> {
        let Layout::Graph { nodes } = self.layout else {
            return Err(TensorError::WrongLayout(self.layout));
        };
        let d = self.features.len();
        let vals = self.values.as_slice().expect("standard layout");
        let obs = mask.0.as_slice().expect("standard layout");
        let mut out = Vec::new();
        for t in 0..self.axis.len {
            for n in 0..nodes {
                let base = (t * nodes + n) * d;
                let properties: Properties = (0..d)
                    .filter(|f| obs[base + f])
                    .map(|f| (self.features[f].clone(), Scalar::Number(vals[base + f])))
                    .collect();
                if properties.is_empty() {
                    continue;
                }
                out.push(DynaRecord {
                    dyna_id: out.len().to_string(),
                    dyna_type: DynaType::State,
                    time: self.axis.time_of(t),
                    entity_id: self.geo_order[n].clone(),
                    location: None,
                    properties,
                });
            }
        }
        Ok(out)
    }

    /// Debug dump: one line per cell, `slot,key...,feature,value,mask`.
    pub fn dump_csv(&self, mask: &MaskTensor, mut sink: impl Write) -> std::io::Result<()> {
        let mut header = vec!["slot"];
        header.extend(self.layout.key_columns());
        header.extend(["feature", "value", "mask"]);
        writeln!(sink, "{}", header.join(","))?;
        let s = self.layout.spatial_size();
        let d = self.features.len();
        let vals = self.values.as_slice().expect("standard layout");
        let obs = mask.0.as_slice().expect("standard layout");
        for t in 0..self.axis.len {
            for k in 0..s {
                let key = self.spatial_label(k).join(",");
                for (f, name) in self.features.iter().enumerate() {
                    let i = (t * s + k) * d + f;
                    writeln!(
                        sink,
                        "{t},{key},{name},{},{}",
                        format_number(vals[i]),
                        u8::from(obs[i])
                    )?;
                }
            }
        }
        Ok(())
    }
}

struct Cell<'a> {
    row: usize,
    time: Timestamp,
    key: usize,
    props: &'a Properties,
}

fn check_features<'a>(
    features: &[String],
    props: impl Iterator<Item = &'a Properties> + Clone,
) -> Result<()> {
    for f in features {
        if !props.clone().any(|p| p.get(f).is_some()) {
            return Err(TensorError::UnknownFeature(f.clone()));
        }
    }
    Ok(())
}

/// Shared scatter for every dense layout.
fn scatter(
    layout: Layout,
    axis: &TimeAxis,
    features: &[String],
    cells: &[Cell<'_>],
    describe_key: impl Fn(usize) -> String,
) -> Result<(ArrayD<f64>, MaskTensor)> {
    let s = layout.spatial_size();
    let d = features.len();
    let mut shape = vec![axis.len];
    shape.extend(layout.spatial_dims());
    shape.push(d);
    let total = axis.len * s * d;
    let mut values = vec![0.0; total];
    let mut mask = vec![false; total];
    let mut seen = vec![false; axis.len * s];

    for c in cells {
        let slot = slot_of(axis, c.row, &c.time)?;
        let cell = slot * s + c.key;
        if std::mem::replace(&mut seen[cell], true) {
            return Err(TensorError::DuplicateCell {
                row: c.row,
                slot,
                key: describe_key(c.key),
            });
        }
        for (f, name) in features.iter().enumerate() {
            match c.props.get(name) {
                Some(Scalar::Number(v)) => {
                    values[cell * d + f] = *v;
                    mask[cell * d + f] = true;
                }
                Some(Scalar::Text(_)) => {
                    return Err(TensorError::NonNumericFeature {
                        row: c.row,
                        feature: name.clone(),
                    })
                }
                None => {}
            }
        }
    }
    let values = ArrayD::from_shape_vec(IxDyn(&shape), values).expect("shape matches");
    let mask = ArrayD::from_shape_vec(IxDyn(&shape), mask).expect("shape matches");
    Ok((values, MaskTensor(mask)))
}

fn slot_of(axis: &TimeAxis, row: usize, t: &Timestamp) -> Result<usize> {
    axis.slot(t).ok_or_else(|| {
        let delta = (*t - axis.start).num_seconds();
        if delta >= 0 && delta % axis.interval_secs as i64 != 0 {
            TensorError::NonAlignedTimestamp {
                row,
                time: format_time(t),
                interval: axis.interval_secs,
            }
        } else {
            TensorError::OutsideAxis {
                row,
                time: format_time(t),
            }
        }
    })
}

fn node_index(geo_order: &[String]) -> HashMap<&str, usize> {
    geo_order
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect()
}

/// `[T, N, D]` tensor from `.dyna` state rows; trajectory rows are ignored.
pub fn dyna_to_graph_tensor(
    records: &[DynaRecord],
    geo_order: &[String],
    axis: &TimeAxis,
    features: &[String],
) -> Result<(STTensor, MaskTensor)> {
    let index = node_index(geo_order);
    let state = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.dyna_type == DynaType::State);
    check_features(features, state.clone().map(|(_, r)| &r.properties))?;
    let cells = state
        .map(|(i, r)| {
            let key =
                *index
                    .get(r.entity_id.as_str())
                    .ok_or_else(|| TensorError::UnknownEntity {
                        row: i + 1,
                        id: r.entity_id.clone(),
                    })?;
            Ok(Cell {
                row: i + 1,
                time: r.time,
                key,
                props: &r.properties,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout::Graph {
        nodes: geo_order.len(),
    };
    let (values, mask) = scatter(layout, axis, features, &cells, |k| geo_order[k].clone())?;
    Ok((
        STTensor {
            layout,
            axis: *axis,
            features: features.to_vec(),
            geo_order: geo_order.to_vec(),
            values,
        },
        mask,
    ))
}

fn grid_cell(dims: GridDims, row: usize, r: u32, c: u32) -> Result<usize> {
    if r >= dims.rows || c >= dims.cols {
        return Err(TensorError::UnknownEntity {
            row,
            id: format!("({r}, {c})"),
        });
    }
    Ok(r as usize * dims.cols as usize + c as usize)
}

/// `[T, I, J, D]` tensor from `.grid` rows.
pub fn grid_to_tensor(
    records: &[GridDynaRecord],
    dims: GridDims,
    axis: &TimeAxis,
    features: &[String],
) -> Result<(STTensor, MaskTensor)> {
    check_features(features, records.iter().map(|r| &r.properties))?;
    let cells = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Cell {
                row: i + 1,
                time: r.time,
                key: grid_cell(dims, i + 1, r.row_id, r.col_id)?,
                props: &r.properties,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout::Grid {
        rows: dims.rows as usize,
        cols: dims.cols as usize,
    };
    let cols = dims.cols as usize;
    let (values, mask) = scatter(layout, axis, features, &cells, |k| {
        format!("({}, {})", k / cols, k % cols)
    })?;
    Ok((
        STTensor {
            layout,
            axis: *axis,
            features: features.to_vec(),
            geo_order: Vec::new(),
            values,
        },
        mask,
    ))
}

/// `[T, N, N, D]` tensor from `.od` rows.
pub fn od_to_tensor(
    records: &[OdDynaRecord],
    geo_order: &[String],
    axis: &TimeAxis,
    features: &[String],
) -> Result<(STTensor, MaskTensor)> {
    let index = node_index(geo_order);
    let n = geo_order.len();
    check_features(features, records.iter().map(|r| &r.properties))?;
    let cells = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let lookup = |id: &String| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| TensorError::UnknownEntity {
                        row: i + 1,
                        id: id.clone(),
                    })
            };
            Ok(Cell {
                row: i + 1,
                time: r.time,
                key: lookup(&r.origin_id)? * n + lookup(&r.des_id)?,
                props: &r.properties,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout::Od { nodes: n };
    let (values, mask) = scatter(layout, axis, features, &cells, |k| {
        format!("{} -> {}", geo_order[k / n], geo_order[k % n])
    })?;
    Ok((
        STTensor {
            layout,
            axis: *axis,
            features: features.to_vec(),
            geo_order: geo_order.to_vec(),
            values,
        },
        mask,
    ))
}

/// Grid-to-grid OD data kept sparse; `[I, J, I, J, D]` slices are
/// materialized on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGridOd {
    pub dims: GridDims,
    pub axis: TimeAxis,
    pub features: Vec<String>,
    /// (slot, origin cell, destination cell) -> observed value per feature.
    cells: BTreeMap<(usize, usize, usize), Vec<Option<f64>>>,
}

impl SparseGridOd {
    fn cells_per_side(&self) -> usize {
        self.dims.rows as usize * self.dims.cols as usize
    }

    /// Number of stored (slot, origin, destination) entries.
    pub fn stored(&self) -> usize {
        self.cells.len()
    }

    pub fn dense_slice(&self, slot: usize) -> (ArrayD<f64>, MaskTensor) {
        let (i, j) = (self.dims.rows as usize, self.dims.cols as usize);
        let c = self.cells_per_side();
        let d = self.features.len();
        let shape = [i, j, i, j, d];
        let mut values = vec![0.0; c * c * d];
        let mut mask = vec![false; c * c * d];
        for ((_, o, t), feats) in self.cells.range((slot, 0, 0)..(slot + 1, 0, 0)) {
            for (f, v) in feats.iter().enumerate() {
                if let Some(v) = v {
                    values[(o * c + t) * d + f] = *v;
                    mask[(o * c + t) * d + f] = true;
                }
            }
        }
        (
            ArrayD::from_shape_vec(IxDyn(&shape), values).expect("shape matches"),
            MaskTensor(ArrayD::from_shape_vec(IxDyn(&shape), mask).expect("shape matches")),
        )
    }

    /// Full `[T, I, J, I, J, D]` tensor.
    pub fn to_dense(&self) -> (STTensor, MaskTensor) {
        let (rows, cols) = (self.dims.rows as usize, self.dims.cols as usize);
        let slices: Vec<_> = (0..self.axis.len).map(|t| self.dense_slice(t)).collect();
        let shape = [self.axis.len, rows, cols, rows, cols, self.features.len()];
        let values: Vec<f64> = slices.iter().flat_map(|(v, _)| v.iter().copied()).collect();
        let mask: Vec<bool> = slices
            .iter()
            .flat_map(|(_, m)| m.0.iter().copied())
            .collect();
        (
            STTensor {
                layout: Layout::GridOd { rows, cols },
                axis: self.axis,
                features: self.features.clone(),
                geo_order: Vec::new(),
                values: ArrayD::from_shape_vec(IxDyn(&shape), values).expect("shape matches"),
            },
            MaskTensor(ArrayD::from_shape_vec(IxDyn(&shape), mask).expect("shape matches")),
        )
    }
}

pub fn gridod_to_tensor(
    records: &[GridOdDynaRecord],
    dims: GridDims,
    axis: &TimeAxis,
    features: &[String],
) -> Result<SparseGridOd> {
    check_features(features, records.iter().map(|r| &r.properties))?;
    let mut cells = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        let slot = slot_of(axis, row, &r.time)?;
        let o = grid_cell(dims, row, r.origin_row_id, r.origin_col_id)?;
        let t = grid_cell(dims, row, r.des_row_id, r.des_col_id)?;
        let feats = features
            .iter()
            .map(|name| match r.properties.get(name) {
                Some(Scalar::Number(v)) => Ok(Some(*v)),
                Some(Scalar::Text(_)) => Err(TensorError::NonNumericFeature {
                    row,
                    feature: name.clone(),
                }),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        if cells.insert((slot, o, t), feats).is_some() {
            return Err(TensorError::DuplicateCell {
                row,
                slot,
                key: format!(
                    "({}, {}) -> ({}, {})",
                    r.origin_row_id, r.origin_col_id, r.des_row_id, r.des_col_id
                ),
            });
        }
    }
    Ok(SparseGridOd {
        dims,
        axis: *axis,
        features: features.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdjacencyOptions {
    /// Replace `A` by `max(A, Aᵀ)`.
    pub symmetrize: bool,
    /// Set the diagonal to 1.
    pub self_loops: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    pub order: Vec<String>,
    pub weights: Array2<f64>,
}

/// Weighted adjacency over `geo_order` from `geo` relations. A missing weight
/// property counts as 1; parallel edges keep the largest weight.
pub fn build_adjacency(
    rel: &[RelationRecord],
    geo_order: &[String],
    weight: Option<&str>,
    opts: AdjacencyOptions,
) -> Result<AdjacencyMatrix> {
    let index = node_index(geo_order);
    let n = geo_order.len();
    let mut a = Array2::<f64>::zeros((n, n));
    for (i, r) in rel
        .iter()
        .enumerate()
        .filter(|(_, r)| r.rel_type == RelType::Geo)
    {
        let w = match weight.and_then(|k| r.properties.get(k)) {
            None => 1.0,
            Some(Scalar::Number(w)) => *w,
            Some(Scalar::Text(_)) => {
                return Err(TensorError::NonNumericWeight {
                    rel_id: r.rel_id.clone(),
                })
            }
        };
        if w < 0.0 {
            return Err(TensorError::NegativeWeight {
                rel_id: r.rel_id.clone(),
                weight: w,
            });
        }
        let lookup = |id: &String| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| TensorError::UnknownEntity {
                    row: i + 1,
                    id: id.clone(),
                })
        };
        let (o, d) = (lookup(&r.origin_id)?, lookup(&r.des_id)?);
        a[[o, d]] = a[[o, d]].max(w);
    }
    if opts.symmetrize {
        for i in 0..n {
            for j in (i + 1)..n {
                let m = a[[i, j]].max(a[[j, i]]);
                a[[i, j]] = m;
                a[[j, i]] = m;
            }
        }
    }
    if opts.self_loops {
        for i in 0..n {
            a[[i, i]] = 1.0;
        }
    }
    Ok(AdjacencyMatrix {
        order: geo_order.to_vec(),
        weights: a,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajPoint {
    pub location: Option<String>,
    pub time: Timestamp,
    /// GPS position from numeric `lon`/`lat` properties, when present.
    pub coord: Option<Coord>,
    pub properties: Properties,
}

impl TrajPoint {
    pub fn at(location: impl Into<String>, time: Timestamp) -> Self {
        TrajPoint {
            location: Some(location.into()),
            time,
            coord: None,
            properties: Properties::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub user_id: String,
    pub points: Vec<TrajPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One trajectory per user (first-appearance order), points stably sorted by
/// time. State rows are ignored.
pub fn build_trajectories(records: &[DynaRecord]) -> Vec<Trajectory> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<TrajPoint>> = HashMap::new();
    let mut seen = HashSet::new();
    for r in records
        .iter()
        .filter(|r| r.dyna_type == DynaType::Trajectory)
    {
        if seen.insert(r.entity_id.as_str()) {
            order.push(&r.entity_id);
        }
        let coord = match (r.properties.get_f64("lon"), r.properties.get_f64("lat")) {
            (Some(lon), Some(lat)) => Some(Coord::new(lon, lat)),
            _ => None,
        };
        groups.entry(&r.entity_id).or_default().push(TrajPoint {
            location: r.location.clone(),
            time: r.time,
            coord,
            properties: r.properties.clone(),
        });
    }
    order
        .into_iter()
        .map(|user| {
            let mut points = groups.remove(user).unwrap_or_default();
            points.sort_by_key(|p| p.time);
            Trajectory {
                user_id: user.to_string(),
                points,
            }
        })
        .collect()
}
