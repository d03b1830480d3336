//! Scaling, chronological splitting, window sampling, batching and
//! trajectory preprocessing.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use ndarray::{ArrayD, Axis, IxDyn, SliceInfoElem};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::tensorize::{MaskTensor, STTensor, Trajectory};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PipelineError {
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),
    #[error("log scaling needs non-negative input, got {0}")]
    NegativeInputForLog(f64),
    #[error("no observed training cells to fit on")]
    NothingObserved,
    #[error("{segment} segment is empty for {total} samples")]
    EmptySegment { segment: &'static str, total: usize },
    #[error("split ratios must be positive and finite")]
    InvalidRatio,
    #[error("window {t_in}+{t_out} does not fit in {len} slots")]
    WindowTooLong {
        t_in: usize,
        t_out: usize,
        len: usize,
    },
    #[error("window sizes must be positive")]
    InvalidWindow,
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    Zscore,
    Minmax,
    Log1p,
    None,
}

/// A fitted value transform. `shift`/`scale` hold mean/std for z-score and
/// min/(max-min) for min-max; they are unused otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub shift: f64,
    pub scale: f64,
}

/// Fit on masked-in cells only.
pub fn fit_scaler(kind: ScalerKind, values: &[f64], mask: &[bool]) -> Result<Scaler> {
    let observed = || {
        values
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
    };
    let n = observed().count();
    let identity = Scaler {
        kind,
        shift: 0.0,
        scale: 1.0,
    };
    match kind {
        ScalerKind::None => Ok(identity),
        ScalerKind::Log1p => match observed().find(|v| *v < 0.0) {
            Some(v) => Err(PipelineError::NegativeInputForLog(v)),
            None => Ok(identity),
        },
        _ if n == 0 => Err(PipelineError::NothingObserved),
        ScalerKind::Zscore => {
            let mean = observed().sum::<f64>() / n as f64;
            let var = observed().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std.is_nan() || std <= 0.0 {
                return Err(PipelineError::DegenerateScale(format!(
                    "standard deviation is {std}"
                )));
            }
            Ok(Scaler {
                kind,
                shift: mean,
                scale: std,
            })
        }
        ScalerKind::Minmax => {
            let min = observed().fold(f64::INFINITY, f64::min);
            let max = observed().fold(f64::NEG_INFINITY, f64::max);
            if max <= min {
                return Err(PipelineError::DegenerateScale(format!(
                    "max {max} does not exceed min {min}"
                )));
            }
            Ok(Scaler {
                kind,
                shift: min,
                scale: max - min,
            })
        }
    }
}

impl Scaler {
    pub fn apply_value(&self, x: f64) -> Result<f64> {
        match self.kind {
            ScalerKind::None => Ok(x),
            ScalerKind::Zscore | ScalerKind::Minmax => Ok((x - self.shift) / self.scale),
            ScalerKind::Log1p if x < 0.0 => Err(PipelineError::NegativeInputForLog(x)),
            ScalerKind::Log1p => Ok(x.ln_1p()),
        }
    }

    pub fn inverse_value(&self, x: f64) -> f64 {
        match self.kind {
            ScalerKind::None => x,
            ScalerKind::Zscore | ScalerKind::Minmax => x * self.scale + self.shift,
            ScalerKind::Log1p => x.exp_m1(),
        }
    }

    pub fn apply(&self, values: &ArrayD<f64>) -> Result<ArrayD<f64>> {
        let out: Vec<f64> = values
            .iter()
            .map(|v| self.apply_value(*v))
            .collect::<Result<_>>()?;
        Ok(ArrayD::from_shape_vec(values.raw_dim(), out).expect("same shape"))
    }

    pub fn inverse(&self, values: &ArrayD<f64>) -> ArrayD<f64> {
        values.mapv(|v| self.inverse_value(v))
    }
}

/// Train/validation/test weights; normalized by their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitSpec {
    /// Segment sizes for `n` items: validation and test are floored, the
    /// remainder goes to training.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(PipelineError::InvalidRatio);
        }
        let total: f64 = parts.iter().sum();
        let floor = |r: f64| (n as f64 * r / total + 1e-9).floor() as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        Ok([n - val - test, val, test])
    }
}

/// Contiguous, ordered train/val/test ranges over `0..n`.
pub fn split_chronological(n: usize, spec: &SplitSpec) -> Result<[Range<usize>; 3]> {
    let [train, val, test] = spec.sizes(n)?;
    for (segment, size) in [("train", train), ("validation", val), ("test", test)] {
        if size == 0 {
            return Err(PipelineError::EmptySegment { segment, total: n });
        }
    }
    Ok([0..train, train..train + val, train + val..n])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub t_in: usize,
    pub t_out: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            t_in: 12,
            t_out: 12,
        }
    }
}

/// One input/target window pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Absolute slot of the first input step.
    pub start: usize,
    pub x: ArrayD<f64>,
    pub y: ArrayD<f64>,
    pub x_mask: ArrayD<bool>,
    pub y_mask: ArrayD<bool>,
    /// Time of day in `[0, 1)` for every input and target step.
    pub x_tod: Vec<f64>,
    pub y_tod: Vec<f64>,
}

impl Sample {
    pub fn t_in(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn t_out(&self) -> usize {
        self.y.shape()[0]
    }

    /// Absolute slot of the first target step.
    pub fn target_start(&self) -> usize {
        self.start + self.t_in()
    }
}

fn time_slice<T: Clone>(a: &ArrayD<T>, range: Range<usize>) -> ArrayD<T> {
    let mut info: Vec<SliceInfoElem> = vec![(range.start..range.end).into()];
    info.extend(std::iter::repeat_n(SliceInfoElem::from(..), a.ndim() - 1));
    a.slice(info.as_slice()).to_owned()
}

/// Windows that lie entirely inside `slots`.
pub fn make_windows_in(
    tensor: &STTensor,
    mask: &MaskTensor,
    spec: WindowSpec,
    slots: Range<usize>,
    exec: Execution,
) -> Result<Vec<Sample>> {
    if spec.t_in == 0 || spec.t_out == 0 {
        return Err(PipelineError::InvalidWindow);
    }
    let len = slots.end.saturating_sub(slots.start);
    let span = spec.t_in + spec.t_out;
    if span > len || slots.end > tensor.axis.len {
        return Err(PipelineError::WindowTooLong {
            t_in: spec.t_in,
            t_out: spec.t_out,
            len,
        });
    }
    let count = len - span + 1;
    let axis = tensor.axis;
    Ok(exec.map_range(count, |k| {
        let start = slots.start + k;
        let mid = start + spec.t_in;
        let end = mid + spec.t_out;
        Sample {
            start,
            x: time_slice(&tensor.values, start..mid),
            y: time_slice(&tensor.values, mid..end),
            x_mask: time_slice(&mask.0, start..mid),
            y_mask: time_slice(&mask.0, mid..end),
            x_tod: (start..mid).map(|t| axis.time_of_day(t)).collect(),
            y_tod: (mid..end).map(|t| axis.time_of_day(t)).collect(),
        }
    }))
}

/// `T - t_in - t_out + 1` windows over the whole axis.
pub fn make_windows(tensor: &STTensor, mask: &MaskTensor, spec: WindowSpec) -> Result<Vec<Sample>> {
    make_windows_in(tensor, mask, spec, 0..tensor.axis.len, Execution::default())
}

#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub slots: [Range<usize>; 3],
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Split the time axis first, then window inside each segment, so no target
/// slot of one segment ever feeds an input of another.
pub fn split_then_window(
    tensor: &STTensor,
    mask: &MaskTensor,
    split: &SplitSpec,
    window: WindowSpec,
    exec: Execution,
) -> Result<SplitWindows> {
    let slots = split_chronological(tensor.axis.len, split)?;
    let train = make_windows_in(tensor, mask, window, slots[0].clone(), exec)?;
    let val = make_windows_in(tensor, mask, window, slots[1].clone(), exec)?;
    let test = make_windows_in(tensor, mask, window, slots[2].clone(), exec)?;
    Ok(SplitWindows {
        slots,
        train,
        val,
        test,
    })
}

/// Stacked samples keyed by name: `X`, `y`, `X_mask`, `y_mask`, `X_tod`,
/// `y_tod` and `start` (absolute first input slot). Masks are stored as 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Positions of the stacked samples in the input slice.
    pub indices: Vec<usize>,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&ArrayD<f64>> {
        self.tensors.get(key)
    }
}

fn stack<T, F>(samples: &[&Sample], pick: F) -> ArrayD<f64>
where
    F: Fn(&Sample) -> ArrayD<T>,
    T: Copy + Into<f64>,
{
    let parts: Vec<ArrayD<f64>> = samples.iter().map(|s| pick(s).mapv(Into::into)).collect();
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).expect("samples in a batch share a shape")
}

fn bool_to_f64(m: &ArrayD<bool>) -> ArrayD<f64> {
    m.mapv(|b| if b { 1.0 } else { 0.0 })
}

/// Batches of `batch_size` (last may be short). With a seed the sample
/// order is shuffled deterministically; without one input order is kept.
pub fn make_batches(
    samples: &[Sample],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(PipelineError::InvalidBatchSize);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order
        .chunks(batch_size)
        .map(|idx| {
            let members: Vec<&Sample> = idx.iter().map(|i| &samples[*i]).collect();
            let mut tensors = BTreeMap::new();
            tensors.insert("X".to_string(), stack(&members, |s| s.x.clone()));
            tensors.insert("y".to_string(), stack(&members, |s| s.y.clone()));
            tensors.insert(
                "X_mask".to_string(),
                stack(&members, |s| bool_to_f64(&s.x_mask)),
            );
            tensors.insert(
                "y_mask".to_string(),
                stack(&members, |s| bool_to_f64(&s.y_mask)),
            );
            tensors.insert(
                "X_tod".to_string(),
                stack(&members, |s| {
                    ArrayD::from_shape_vec(IxDyn(&[s.x_tod.len()]), s.x_tod.clone()).unwrap()
                }),
            );
            tensors.insert(
                "y_tod".to_string(),
                stack(&members, |s| {
                    ArrayD::from_shape_vec(IxDyn(&[s.y_tod.len()]), s.y_tod.clone()).unwrap()
                }),
            );
            tensors.insert(
                "start".to_string(),
                ArrayD::from_shape_vec(
                    IxDyn(&[members.len()]),
                    members.iter().map(|s| s.start as f64).collect(),
                )
                .unwrap(),
            );
            Batch {
                indices: idx.to_vec(),
                tensors,
            }
        })
        .collect())
}

/// Rebuild a sample from row `i` of a batch.
pub fn sample_from_batch(batch: &Batch, i: usize) -> Option<Sample> {
    let row = |key: &str| batch.get(key).map(|a| a.index_axis(Axis(0), i).to_owned());
    let to_bool = |a: ArrayD<f64>| a.mapv(|v| v != 0.0);
    Some(Sample {
        start: *batch.get("start")?.get(IxDyn(&[i]))? as usize,
        x: row("X")?,
        y: row("y")?,
        x_mask: to_bool(row("X_mask")?),
        y_mask: to_bool(row("y_mask")?),
        x_tod: row("X_tod")?.iter().copied().collect(),
        y_tod: row("y_tod")?.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterThresholds {
    pub min_points: usize,
    pub min_trajs_per_user: usize,
    pub min_visits_per_location: usize,
}

/// Drop short trajectories, inactive users and rarely visited locations,
/// repeating until nothing changes. Empty trajectories are always dropped.
pub fn filter_trajectories(mut trajs: Vec<Trajectory>, th: FilterThresholds) -> Vec<Trajectory> {
    loop {
        let before: (usize, usize) = (trajs.len(), trajs.iter().map(Trajectory::len).sum());

        if th.min_visits_per_location > 0 {
            let mut visits: HashMap<String, usize> = HashMap::new();
            for p in trajs.iter().flat_map(|t| &t.points) {
                if let Some(loc) = &p.location {
                    *visits.entry(loc.clone()).or_default() += 1;
                }
            }
            for t in &mut trajs {
                t.points.retain(|p| {
                    p.location
                        .as_ref()
                        .is_none_or(|l| visits[l] >= th.min_visits_per_location)
                });
            }
        }

        trajs.retain(|t| !t.is_empty() && t.len() >= th.min_points);

        if th.min_trajs_per_user > 0 {
            let mut per_user: HashMap<String, usize> = HashMap::new();
            for t in &trajs {
                *per_user.entry(t.user_id.clone()).or_default() += 1;
            }
            trajs.retain(|t| per_user[&t.user_id] >= th.min_trajs_per_user);
        }

        let after = (trajs.len(), trajs.iter().map(Trajectory::len).sum());
        if after == before {
            return trajs;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajWindowMode {
    /// Window size in seconds measured from the first point of the window.
    Time,
    /// Window size in points.
    Length,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajWindowSpec {
    mode: TrajWindowMode,
    size: u64,
}

impl TrajWindowSpec {
    pub fn new(mode: TrajWindowMode, size: u64) -> Result<Self> {
        if size == 0 {
            return Err(PipelineError::InvalidWindow);
        }
        Ok(TrajWindowSpec { mode, size })
    }

    pub fn hours(h: u64) -> Result<Self> {
        Self::new(TrajWindowMode::Time, h * 3600)
    }

    pub fn points(n: u64) -> Result<Self> {
        Self::new(TrajWindowMode::Length, n)
    }

    pub fn mode(&self) -> TrajWindowMode {
        self.mode
    }

    pub fn size(&self) -> u64 {
        self.size
    }
}

/// Cut a trajectory into consecutive windows. Concatenating the output gives
/// back the input points.
pub fn cut_trajectory(traj: &Trajectory, spec: TrajWindowSpec) -> Vec<Trajectory> {
    let piece = |points: &[crate::tensorize::TrajPoint]| Trajectory {
        user_id: traj.user_id.clone(),
        points: points.to_vec(),
    };
    match spec.mode {
        TrajWindowMode::Length => traj.points.chunks(spec.size as usize).map(piece).collect(),
        TrajWindowMode::Time => {
            let mut out = Vec::new();
            let mut begin = 0;
            for i in 1..traj.points.len() {
                let gap = (traj.points[i].time - traj.points[begin].time).num_seconds();
                if gap > spec.size as i64 {
                    out.push(piece(&traj.points[begin..i]));
                    begin = i;
                }
            }
            if begin < traj.points.len() {
                out.push(piece(&traj.points[begin..]));
            }
            out
        }
    }
}

/// Split each user's trajectories, in order, by `spec`. Unlike
/// [`split_chronological`], users with few trajectories may get empty
/// segments.
pub fn split_user_trajectories(
    trajs: &[Trajectory],
    spec: &SplitSpec,
) -> Result<[Vec<Trajectory>; 3]> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<&Trajectory>> = HashMap::new();
    for t in trajs {
        by_user
            .entry(&t.user_id)
            .or_insert_with(|| {
                order.push(&t.user_id);
                Vec::new()
            })
            .push(t);
    }
    let mut out: [Vec<Trajectory>; 3] = Default::default();
    for user in order {
        let list = &by_user[user];
        let [train, val, _] = spec.sizes(list.len())?;
        for (i, t) in list.iter().enumerate() {
            let seg = if i < train {
                0
            } else if i < train + val {
                1
            } else {
                2
            };
            out[seg].push((*t).clone());
        }
    }
    Ok(out)
}
