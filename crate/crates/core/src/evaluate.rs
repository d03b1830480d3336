//! Regression, ranking and map-matching metrics.
//!
//! Regression reductions run over fixed 4096-cell blocks with compensated
//! summation inside each block, then fold the block partials left to right.
//! The block layout never depends on the execution mode, so sequential and
//! parallel evaluation return bit-identical numbers.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::hash::Hash;

use ndarray::{ArrayViewD, Axis};
use serde::{Deserialize, Serialize};

use crate::exec::Execution;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every cell is masked out")]
    AllMasked,
    #[error("horizon {horizon} outside 1..={output_len}")]
    HorizonOutOfRange { horizon: usize, output_len: usize },
    #[error("case {0} has an empty candidate list")]
    EmptyCandidateList(usize),
    #[error("case {0} lists a candidate twice")]
    DuplicateCandidate(usize),
    #[error("ranking needs at least one case and K >= 1")]
    NoCases,
    #[error("true route is empty or has zero length")]
    EmptyTrueRoute,
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Serialize non-finite floats as JSON `null` and read `null` back as NaN.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    fn merge(&mut self, other: Sum) {
        self.add(other.hi);
        self.add(other.lo);
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

const BLOCK: usize = 4096;

fn blocked<P, F>(exec: Execution, len: usize, block: F) -> Vec<P>
where
    P: Send,
    F: Fn(std::ops::Range<usize>) -> P + Sync + Send,
{
    let n_blocks = len.div_ceil(BLOCK);
    exec.map_range(n_blocks, |b| block(b * BLOCK..((b + 1) * BLOCK).min(len)))
}

#[derive(Debug, Clone, Copy, Default)]
struct FirstPass {
    n: usize,
    abs_err: Sum,
    sq_err: Sum,
    y: Sum,
    err: Sum,
    n_mape: usize,
    ape: Sum,
}

#[derive(Debug, Clone, Copy, Default)]
struct SecondPass {
    y_dev: Sum,
    err_dev: Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    #[serde(with = "nan_as_null")]
    pub mae: f64,
    #[serde(with = "nan_as_null")]
    pub mse: f64,
    #[serde(with = "nan_as_null")]
    pub rmse: f64,
    /// Percent.
    #[serde(with = "nan_as_null")]
    pub mape: f64,
    #[serde(with = "nan_as_null")]
    pub r2: f64,
    #[serde(with = "nan_as_null")]
    pub evar: f64,
    /// Masked-in cells scored by MAE/MSE/RMSE/R2/EVAR.
    pub n_effective: usize,
    /// Cells that additionally passed the MAPE floor and zero guard.
    pub n_mape: usize,
    /// Truth has zero variance, so R2 and EVAR are NaN.
    pub zero_variance: bool,
}

fn check_lengths(y: usize, yhat: usize, mask: usize) -> Result<()> {
    if y != yhat || y != mask {
        return Err(MetricError::ShapeMismatch(format!(
            "y has {y} cells, prediction {yhat}, mask {mask}"
        )));
    }
    Ok(())
}

/// Masked MAE, MSE, RMSE, MAPE, R2 and EVAR.
///
/// Only cells with `mask == true` count. MAPE further drops cells whose
/// truth is exactly zero or has magnitude below `mape_floor`.
pub fn regression_metrics(
    y: &[f64],
    yhat: &[f64],
    mask: &[bool],
    mape_floor: f64,
) -> Result<RegressionMetrics> {
    regression_metrics_with(Execution::default(), y, yhat, mask, mape_floor)
}

pub fn regression_metrics_with(
    exec: Execution,
    y: &[f64],
    yhat: &[f64],
    mask: &[bool],
    mape_floor: f64,
) -> Result<RegressionMetrics> {
    check_lengths(y.len(), yhat.len(), mask.len())?;
    let first = blocked(exec, y.len(), |range| {
        let mut p = FirstPass::default();
        for i in range {
            if !mask[i] {
                continue;
            }
            let e = y[i] - yhat[i];
            p.n += 1;
            p.abs_err.add(e.abs());
            p.sq_err.add(e * e);
            p.y.add(y[i]);
            p.err.add(e);
            if y[i] != 0.0 && y[i].abs() >= mape_floor {
                p.n_mape += 1;
                p.ape.add((e / y[i]).abs());
            }
        }
        p
    })
    .into_iter()
    .fold(FirstPass::default(), |mut acc, p| {
        acc.n += p.n;
        acc.abs_err.merge(p.abs_err);
        acc.sq_err.merge(p.sq_err);
        acc.y.merge(p.y);
        acc.err.merge(p.err);
        acc.n_mape += p.n_mape;
        acc.ape.merge(p.ape);
        acc
    });
    if first.n == 0 {
        return Err(MetricError::AllMasked);
    }
    let n = first.n as f64;
    let y_mean = first.y.value() / n;
    let err_mean = first.err.value() / n;

    let second = blocked(exec, y.len(), |range| {
        let mut p = SecondPass::default();
        for i in range {
            if mask[i] {
                let dy = y[i] - y_mean;
                let de = (y[i] - yhat[i]) - err_mean;
                p.y_dev.add(dy * dy);
                p.err_dev.add(de * de);
            }
        }
        p
    })
    .into_iter()
    .fold(SecondPass::default(), |mut acc, p| {
        acc.y_dev.merge(p.y_dev);
        acc.err_dev.merge(p.err_dev);
        acc
    });

    let mse = first.sq_err.value() / n;
    let ss_tot = second.y_dev.value();
    let zero_variance = ss_tot == 0.0;
    let (r2, evar) = if zero_variance {
        (f64::NAN, f64::NAN)
    } else {
        (
            1.0 - first.sq_err.value() / ss_tot,
            1.0 - second.err_dev.value() / ss_tot,
        )
    };
    let mape = if first.n_mape == 0 {
        f64::NAN
    } else {
        first.ape.value() / first.n_mape as f64 * 100.0
    };
    Ok(RegressionMetrics {
        mae: first.abs_err.value() / n,
        mse,
        rmse: mse.sqrt(),
        mape,
        r2,
        evar,
        n_effective: first.n,
        n_mape: first.n_mape,
        zero_variance,
    })
}

/// Masked mean absolute error; the training loss of every forecaster.
pub fn masked_mae(y: &[f64], yhat: &[f64], mask: &[bool]) -> Result<f64> {
    check_lengths(y.len(), yhat.len(), mask.len())?;
    let (n, sum) = blocked(Execution::default(), y.len(), |range| {
        let mut s = Sum::default();
        let mut n = 0usize;
        for i in range.filter(|i| mask[*i]) {
            n += 1;
            s.add((y[i] - yhat[i]).abs());
        }
        (n, s)
    })
    .into_iter()
    .fold((0usize, Sum::default()), |(n, mut s), (bn, bs)| {
        s.merge(bs);
        (n + bn, s)
    });
    if n == 0 {
        return Err(MetricError::AllMasked);
    }
    Ok(sum.value() / n as f64)
}

/// Per-horizon and all-horizon regression scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub horizons: BTreeMap<usize, RegressionMetrics>,
    pub all: RegressionMetrics,
}

impl RegressionReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>8} {:>12} {:>12} {:>12} {:>10} {:>9} {:>9} {:>9}",
            "horizon", "MAE", "MSE", "RMSE", "MAPE(%)", "R2", "EVAR", "n"
        );
        let rows = self
            .horizons
            .iter()
            .map(|(h, m)| (h.to_string(), m))
            .chain(std::iter::once(("all".to_string(), &self.all)));
        for (label, m) in rows {
            let _ = writeln!(
                out,
                "{:>8} {:>12.4} {:>12.4} {:>12.4} {:>10.4} {:>9.4} {:>9.4} {:>9}",
                label, m.mae, m.mse, m.rmse, m.mape, m.r2, m.evar, m.n_effective
            );
        }
        out
    }
}

fn contiguous(view: ArrayViewD<'_, f64>) -> Vec<f64> {
    view.iter().copied().collect()
}

/// Score a forecast whose axis 0 is the output step (`[T', ...]`).
/// Horizons are 1-indexed.
pub fn evaluate_forecast(
    pred: ArrayViewD<'_, f64>,
    truth: ArrayViewD<'_, f64>,
    mask: ArrayViewD<'_, bool>,
    horizons: &[usize],
    mape_floor: f64,
) -> Result<RegressionReport> {
    if pred.shape() != truth.shape() || pred.shape() != mask.shape() {
        return Err(MetricError::ShapeMismatch(format!(
            "prediction {:?}, truth {:?}, mask {:?}",
            pred.shape(),
            truth.shape(),
            mask.shape()
        )));
    }
    let output_len = pred.shape().first().copied().unwrap_or(0);
    for &h in horizons {
        if h == 0 || h > output_len {
            return Err(MetricError::HorizonOutOfRange {
                horizon: h,
                output_len,
            });
        }
    }
    let mut by_horizon = BTreeMap::new();
    for &h in horizons {
        let p = contiguous(pred.index_axis(Axis(0), h - 1));
        let y = contiguous(truth.index_axis(Axis(0), h - 1));
        let m: Vec<bool> = mask.index_axis(Axis(0), h - 1).iter().copied().collect();
        by_horizon.insert(h, regression_metrics(&y, &p, &m, mape_floor)?);
    }
    let all = regression_metrics(
        &contiguous(truth.view()),
        &contiguous(pred.view()),
        &mask.iter().copied().collect::<Vec<_>>(),
        mape_floor,
    )?;
    Ok(RegressionReport {
        horizons: by_horizon,
        all,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub k: usize,
    pub n: usize,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub f1_at_k: f64,
    pub mrr_at_k: f64,
    pub ndcg_at_k: f64,
}

/// Contribution of a hit at 1-based `rank` to MRR.
pub fn reciprocal_rank(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// Contribution of a hit at 1-based `rank` to NDCG with one relevant item.
pub fn dcg_gain(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Top-K ranking scores with one ground-truth item per case. Misses
/// contribute zero to MRR and NDCG.
pub fn ranking_metrics<T: Eq + Hash>(
    truth: &[T],
    ranked: &[Vec<T>],
    k: usize,
) -> Result<RankingMetrics> {
    if truth.len() != ranked.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "{} truths for {} ranked lists",
            truth.len(),
            ranked.len()
        )));
    }
    if truth.is_empty() || k == 0 {
        return Err(MetricError::NoCases);
    }
    let mut hits = 0usize;
    let mut rr = Sum::default();
    let mut dcg = Sum::default();
    for (case, (t, list)) in truth.iter().zip(ranked).enumerate() {
        if list.is_empty() {
            return Err(MetricError::EmptyCandidateList(case));
        }
        let mut seen = HashSet::with_capacity(list.len());
        if !list.iter().all(|c| seen.insert(c)) {
            return Err(MetricError::DuplicateCandidate(case));
        }
        if let Some(pos) = list.iter().take(k).position(|c| c == t) {
            hits += 1;
            rr.add(reciprocal_rank(pos + 1));
            dcg.add(dcg_gain(pos + 1));
        }
    }
    let n = truth.len() as f64;
    let precision = hits as f64 / (n * k as f64);
    let recall = hits as f64 / n;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(RankingMetrics {
        k,
        n: truth.len(),
        precision_at_k: precision,
        recall_at_k: recall,
        f1_at_k: f1,
        mrr_at_k: rr.value() / n,
        ndcg_at_k: dcg.value() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub rmf: f64,
    pub an: f64,
    pub al: f64,
    pub d_true_total: f64,
    pub d_subtracted: f64,
    pub d_added: f64,
    pub n_correct: usize,
    pub n_true: usize,
}

impl MatchReport {
    /// Pool several routes: sums lengths and counts, then recomputes ratios.
    pub fn pooled(reports: &[MatchReport]) -> Result<MatchReport> {
        let mut total = MatchReport {
            rmf: 0.0,
            an: 0.0,
            al: 0.0,
            d_true_total: 0.0,
            d_subtracted: 0.0,
            d_added: 0.0,
            n_correct: 0,
            n_true: 0,
        };
        let mut correct_len = 0.0;
        for r in reports {
            total.d_true_total += r.d_true_total;
            total.d_subtracted += r.d_subtracted;
            total.d_added += r.d_added;
            total.n_correct += r.n_correct;
            total.n_true += r.n_true;
            correct_len += r.al * r.d_true_total;
        }
        if total.n_true == 0 || total.d_true_total <= 0.0 {
            return Err(MetricError::EmptyTrueRoute);
        }
        total.rmf = (total.d_subtracted + total.d_added) / total.d_true_total;
        total.an = total.n_correct as f64 / total.n_true as f64;
        total.al = correct_len / total.d_true_total;
        Ok(total)
    }
}

/// Route Mismatch Fraction, Accuracy in Number and Accuracy in Length.
///
/// Routes are `(segment id, length)` sequences; repeated ids count once.
/// `d_subtracted` is the length of true segments the match missed,
/// `d_added` the length of matched segments not on the true route, and the
/// RMF denominator is the total true-route length.
pub fn match_metrics<S: AsRef<str>>(
    truth: &[(S, f64)],
    matched: &[(S, f64)],
) -> Result<MatchReport> {
    fn distinct<S: AsRef<str>>(route: &[(S, f64)]) -> Vec<(&str, f64)> {
        let mut seen = HashSet::new();
        route
            .iter()
            .filter(|(id, _)| seen.insert(id.as_ref()))
            .map(|(id, len)| (id.as_ref(), *len))
            .collect()
    }
    let truth = distinct(truth);
    let matched = distinct(matched);
    let true_ids: HashSet<&str> = truth.iter().map(|(id, _)| *id).collect();
    let matched_ids: HashSet<&str> = matched.iter().map(|(id, _)| *id).collect();

    let total = truth.iter().fold(0.0, |acc, (_, l)| acc + l);
    if truth.is_empty() || total <= 0.0 {
        return Err(MetricError::EmptyTrueRoute);
    }
    let mut correct_len = 0.0;
    let mut subtracted = 0.0;
    let mut n_correct = 0;
    for (id, len) in &truth {
        if matched_ids.contains(id) {
            n_correct += 1;
            correct_len += len;
        } else {
            subtracted += len;
        }
    }
    let added = matched
        .iter()
        .filter(|(id, _)| !true_ids.contains(id))
        .fold(0.0, |acc, (_, l)| acc + l);
    Ok(MatchReport {
        rmf: (subtracted + added) / total,
        an: n_correct as f64 / truth.len() as f64,
        al: correct_len / total,
        d_true_total: total,
        d_subtracted: subtracted,
        d_added: added,
        n_correct,
        n_true: truth.len(),
    })
}
