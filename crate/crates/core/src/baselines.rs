//! Classic forecasters: historical average, vector autoregression and
//! persistence, behind one predict/loss contract.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::evaluate::{masked_mae, MetricError};
use crate::exec::Execution;
use crate::pipeline::{sample_from_batch, Batch, Sample};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("no observed training cells")]
    EmptyTrainingData,
    #[error("training length {len} must exceed the lag order {p}")]
    InsufficientLength { len: usize, p: usize },
    #[error("{k} series exceed the limit of {max}")]
    TooManySeries { k: usize, max: usize },
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("input has {got} steps, model needs {needed}")]
    InputTooShort { needed: usize, got: usize },
    #[error("period must be at least 1")]
    ZeroPeriod,
    #[error("lag order must be at least 1")]
    ZeroOrder,
    #[error("batch lacks `{0}`")]
    MissingBatchKey(&'static str),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// The shared forecaster contract.
pub trait ForecastModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Forecast `t_out` steps from input `x` of shape `[t_in, spatial.., D]`.
    /// `target_start` is the absolute slot of the first forecast step.
    fn predict(&self, x: ArrayViewD<f64>, target_start: usize, t_out: usize)
        -> Result<ArrayD<f64>>;

    fn predict_sample(&self, sample: &Sample) -> Result<ArrayD<f64>> {
        self.predict(sample.x.view(), sample.target_start(), sample.t_out())
    }

    /// Forecasts for every sample, stacked like the batch's `y`.
    fn predict_batch(&self, batch: &Batch) -> Result<ArrayD<f64>> {
        let samples: Vec<Sample> = (0..batch.len())
            .map(|i| sample_from_batch(batch, i).ok_or(ModelError::MissingBatchKey("X")))
            .collect::<Result<_>>()?;
        let preds = Execution::default().try_map(&samples, |s| self.predict_sample(s))?;
        let views: Vec<_> = preds.iter().map(|p| p.view()).collect();
        Ok(ndarray::stack(Axis(0), &views).expect("forecasts share a shape"))
    }

    /// Masked MAE between `predict_batch` and the batch targets.
    fn calculate_loss(&self, batch: &Batch) -> Result<f64> {
        let y = batch.get("y").ok_or(ModelError::MissingBatchKey("y"))?;
        let mask = batch
            .get("y_mask")
            .ok_or(ModelError::MissingBatchKey("y_mask"))?;
        let pred = self.predict_batch(batch)?;
        let mask: Vec<bool> = mask.iter().map(|m| *m != 0.0).collect();
        let y: Vec<f64> = y.iter().copied().collect();
        let pred: Vec<f64> = pred.iter().copied().collect();
        Ok(masked_mae(&y, &pred, &mask)?)
    }
}

fn flatten(values: ArrayViewD<f64>) -> Array2<f64> {
    let t = values.shape()[0];
    let k = values.len() / t.max(1);
    Array2::from_shape_vec((t, k), values.iter().copied().collect()).expect("row-major")
}

fn flatten_mask(mask: ArrayViewD<bool>) -> Array2<bool> {
    let t = mask.shape()[0];
    let k = mask.len() / t.max(1);
    Array2::from_shape_vec((t, k), mask.iter().copied().collect()).expect("row-major")
}

fn with_steps(cell_shape: &[usize], steps: usize, data: Vec<f64>) -> ArrayD<f64> {
    let mut shape = vec![steps];
    shape.extend_from_slice(cell_shape);
    ArrayD::from_shape_vec(IxDyn(&shape), data).expect("sized to shape")
}

/// Historical average keyed by slot-within-period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaModel {
    pub period: usize,
    /// Shape of one time step: `[spatial.., D]`.
    pub cell_shape: Vec<usize>,
    /// `[period, cells]` bucket means; NaN where a bucket saw nothing.
    pub table: Array2<f64>,
    /// Per-cell mean over all observed training slots; NaN if never observed.
    pub cell_mean: Array1<f64>,
    pub global_mean: f64,
}

/// Fit on `values` (`[T, spatial.., D]`) whose first row is absolute slot
/// `first_slot`.
pub fn ha_fit(
    values: ArrayViewD<f64>,
    mask: ArrayViewD<bool>,
    first_slot: usize,
    period: usize,
) -> Result<HaModel> {
    if period == 0 {
        return Err(ModelError::ZeroPeriod);
    }
    let x = flatten(values.view());
    let m = flatten_mask(mask);
    let k = x.ncols();
    let mut table = Array2::<f64>::zeros((period, k));
    let mut counts = Array2::<usize>::zeros((period, k));
    let mut cell_mean = Array1::<f64>::zeros(k);
    let mut cell_count = vec![0usize; k];
    let (mut global, mut n) = (0.0, 0usize);
    for t in 0..x.nrows() {
        let bucket = (first_slot + t) % period;
        for c in 0..k {
            if !m[[t, c]] {
                continue;
            }
            let v = x[[t, c]];
            // running means stay exact when every contribution is equal
            counts[[bucket, c]] += 1;
            table[[bucket, c]] += (v - table[[bucket, c]]) / counts[[bucket, c]] as f64;
            cell_count[c] += 1;
            cell_mean[c] += (v - cell_mean[c]) / cell_count[c] as f64;
            n += 1;
            global += (v - global) / n as f64;
        }
    }
    if n == 0 {
        return Err(ModelError::EmptyTrainingData);
    }
    table.zip_mut_with(&counts, |v, c| {
        if *c == 0 {
            *v = f64::NAN
        }
    });
    for (v, c) in cell_mean.iter_mut().zip(&cell_count) {
        if *c == 0 {
            *v = f64::NAN;
        }
    }
    Ok(HaModel {
        period,
        cell_shape: values.shape()[1..].to_vec(),
        table,
        cell_mean,
        global_mean: global,
    })
}

impl HaModel {
    /// Bucket mean, else the cell's overall mean, else the global mean.
    pub fn value(&self, slot: usize, cell: usize) -> f64 {
        let v = self.table[[slot % self.period, cell]];
        if !v.is_nan() {
            return v;
        }
        let v = self.cell_mean[cell];
        if !v.is_nan() {
            return v;
        }
        self.global_mean
    }

    pub fn forecast(&self, target_start: usize, t_out: usize) -> ArrayD<f64> {
        let k = self.table.ncols();
        let data = (0..t_out)
            .flat_map(|h| (0..k).map(move |c| self.value(target_start + h, c)))
            .collect();
        with_steps(&self.cell_shape, t_out, data)
    }
}

impl ForecastModel for HaModel {
    fn name(&self) -> &'static str {
        "HA"
    }

    fn predict(
        &self,
        _x: ArrayViewD<f64>,
        target_start: usize,
        t_out: usize,
    ) -> Result<ArrayD<f64>> {
        Ok(self.forecast(target_start, t_out))
    }
}

pub const DEFAULT_MAX_SERIES: usize = 400;
pub const VAR_RIDGE: f64 = 1e-8;

/// Vector autoregression over the flattened `k = spatial x D` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub p: usize,
    pub cell_shape: Vec<usize>,
    pub intercept: Array1<f64>,
    /// `coefs[l][[j, i]]` weighs series `i` at lag `l + 1` in equation `j`.
    pub coefs: Vec<Array2<f64>>,
    /// Worst relative residual of the solved normal equations.
    pub relative_residual: f64,
}

impl VarModel {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for q in 0..j {
            d -= l[[j, q]] * l[[j, q]];
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for q in 0..j {
                s -= l[[i, q]] * l[[j, q]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for q in 0..i {
            y[i] -= l[[i, q]] * y[q];
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for q in i + 1..n {
            y[i] -= l[[q, i]] * y[q];
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// `[1, x_{t-1}, .., x_{t-p}]`.
fn design_row(x: &Array2<f64>, t: usize, p: usize) -> Array1<f64> {
    let k = x.ncols();
    let mut z = Array1::<f64>::zeros(1 + k * p);
    z[0] = 1.0;
    for l in 0..p {
        z.slice_mut(ndarray::s![1 + l * k..1 + (l + 1) * k])
            .assign(&x.row(t - 1 - l));
    }
    z
}

/// Fit by least squares on the normal equations with a small ridge. A
/// regression row is used only when all of its lag cells are observed; a
/// masked target cell drops the row for that target alone.
pub fn var_fit(
    values: ArrayViewD<f64>,
    mask: ArrayViewD<bool>,
    p: usize,
    max_series: usize,
) -> Result<VarModel> {
    if p == 0 {
        return Err(ModelError::ZeroOrder);
    }
    let x = flatten(values.view());
    let m = flatten_mask(mask);
    let (len, k) = x.dim();
    if len <= p {
        return Err(ModelError::InsufficientLength { len, p });
    }
    if k > max_series {
        return Err(ModelError::TooManySeries { k, max: max_series });
    }
    let dim = 1 + k * p;
    let rows: Vec<usize> = (p..len)
        .filter(|&t| (1..=p).all(|l| m.row(t - l).iter().all(|b| *b)))
        .collect();
    let designs: Vec<Array1<f64>> = rows.iter().map(|&t| design_row(&x, t, p)).collect();

    // Targets sharing the same excluded rows share one factorization.
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for j in 0..k {
        let excluded: Vec<usize> = (0..rows.len()).filter(|&r| !m[[rows[r], j]]).collect();
        groups.entry(excluded).or_default().push(j);
    }
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = groups.into_iter().collect();
    groups.sort_by_key(|(_, targets)| targets[0]);

    let mut theta = Array2::<f64>::zeros((dim, k));
    let mut worst = 0.0f64;
    for (excluded, targets) in groups {
        let used: Vec<usize> = (0..rows.len())
            .filter(|r| excluded.binary_search(r).is_err())
            .collect();
        if used.is_empty() {
            return Err(ModelError::SingularDesign(format!(
                "series {} has no usable regression rows",
                targets[0]
            )));
        }
        let mut gram = Array2::<f64>::zeros((dim, dim));
        for &r in &used {
            let z = &designs[r];
            for a in 0..dim {
                for b in 0..=a {
                    gram[[a, b]] += z[a] * z[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                gram[[b, a]] = gram[[a, b]];
            }
            gram[[a, a]] += VAR_RIDGE;
        }
        let l = cholesky(&gram).ok_or_else(|| {
            ModelError::SingularDesign("normal equations are not positive definite".into())
        })?;
        for j in targets {
            let mut rhs = Array1::<f64>::zeros(dim);
            for &r in &used {
                rhs.scaled_add(x[[rows[r], j]], &designs[r]);
            }
            let mut sol = cholesky_solve(&l, &rhs);
            // one step of iterative refinement
            let resid = &rhs - &gram.dot(&sol);
            sol += &cholesky_solve(&l, &resid);
            let resid = &rhs - &gram.dot(&sol);
            let scale = rhs.dot(&rhs).sqrt();
            if scale > 0.0 {
                worst = worst.max(resid.dot(&resid).sqrt() / scale);
            }
            theta.column_mut(j).assign(&sol);
        }
    }

    let intercept = theta.row(0).to_owned();
    let coefs = (0..p)
        .map(|l| {
            theta
                .slice(ndarray::s![1 + l * k..1 + (l + 1) * k, ..])
                .t()
                .to_owned()
        })
        .collect();
    Ok(VarModel {
        p,
        cell_shape: values.shape()[1..].to_vec(),
        intercept,
        coefs,
        relative_residual: worst,
    })
}

/// Recursive rollout. `history` is `[p, k]`, oldest row first.
pub fn var_predict(model: &VarModel, history: ArrayView2<f64>, t_out: usize) -> Array2<f64> {
    let (p, k) = (model.p, model.k());
    assert_eq!(
        history.dim(),
        (p, k),
        "history must be the last p observations"
    );
    let mut window: Vec<Array1<f64>> = history.rows().into_iter().map(|r| r.to_owned()).collect();
    let mut out = Array2::<f64>::zeros((t_out, k));
    for h in 0..t_out {
        let mut next = model.intercept.clone();
        for (l, a) in model.coefs.iter().enumerate() {
            next += &a.dot(&window[window.len() - 1 - l]);
        }
        out.row_mut(h).assign(&next);
        window.remove(0);
        window.push(next);
    }
    out
}

impl ForecastModel for VarModel {
    fn name(&self) -> &'static str {
        "VAR"
    }

    fn predict(
        &self,
        x: ArrayViewD<f64>,
        _target_start: usize,
        t_out: usize,
    ) -> Result<ArrayD<f64>> {
        let flat = flatten(x);
        let got = flat.nrows();
        if got < self.p {
            return Err(ModelError::InputTooShort {
                needed: self.p,
                got,
            });
        }
        let history = flat.slice(ndarray::s![got - self.p.., ..]);
        let out = var_predict(self, history, t_out);
        Ok(with_steps(
            &self.cell_shape,
            t_out,
            out.into_iter().collect(),
        ))
    }
}

/// Repeat the last input step.
pub fn persistence_predict(x: ArrayViewD<f64>, t_out: usize) -> ArrayD<f64> {
    let last = x.index_axis(Axis(0), x.shape()[0] - 1);
    let data: Vec<f64> = (0..t_out).flat_map(|_| last.iter().copied()).collect();
    with_steps(last.shape(), t_out, data)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Persistence;

impl ForecastModel for Persistence {
    fn name(&self) -> &'static str {
        "Persistence"
    }

    fn predict(
        &self,
        x: ArrayViewD<f64>,
        _target_start: usize,
        t_out: usize,
    ) -> Result<ArrayD<f64>> {
        if x.shape()[0] == 0 {
            return Err(ModelError::InputTooShort { needed: 1, got: 0 });
        }
        Ok(persistence_predict(x, t_out))
    }
}
