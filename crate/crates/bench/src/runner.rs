//! `run`: load -> validate -> tensorize -> window -> fit -> predict -> evaluate
//! -> persist.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flate2::{Compression, GzBuilder};
use ndarray::{ArrayD, Axis, Slice};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use stkit_core::atomic::{load_dataset, write_table, AtomicDataset, DynaType};
use stkit_core::baselines::{ha_fit, var_fit, ForecastModel, Persistence};
use stkit_core::evaluate::{
    evaluate_forecast, match_metrics, ranking_metrics, regression_metrics, MatchReport,
};
use stkit_core::mapmatch::{
    build_road_network, match_all, matched_dyna_records, MatchError, MatchParams,
};
use stkit_core::pipeline::{
    cut_trajectory, filter_trajectories, fit_scaler, make_batches, split_then_window,
    split_user_trajectories, FilterThresholds, Sample, ScalerKind, SplitSpec, TrajWindowMode,
    TrajWindowSpec, WindowSpec,
};
use stkit_core::tensorize::{
    build_time_axis, build_trajectories, dyna_to_graph_tensor, grid_to_tensor, od_to_tensor,
    Layout, MaskTensor, STTensor, Trajectory,
};
use stkit_core::Execution;

use crate::config::Config;
use crate::error::{BenchError, Result};
use crate::ranking::{LocationRanker, Markov, Popularity};
use crate::synthetic::ROUTES_FILE;

pub const RECORD_FILE: &str = "record.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv.gz";
pub const MATCHED_FILE: &str = "matched.dyna";
pub const DATA_DIR_ENV: &str = "STKIT_DATA_DIR";
/// MAPE floor applied to grid-flow runs when `mape_floor` is unset.
pub const GRID_MAPE_FLOOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TrafficStatePred,
    MapMatching,
    EvalRanking,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::TrafficStatePred => "traffic_state_pred",
            Task::MapMatching => "map_matching",
            Task::EvalRanking => "eval_ranking",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        match s {
            "traffic_state_pred" => Ok(Task::TrafficStatePred),
            "map_matching" => Ok(Task::MapMatching),
            "eval_ranking" => Ok(Task::EvalRanking),
            _ => Err(BenchError::UnknownTask(s.into())),
        }
    }

    pub fn models(self) -> &'static [&'static str] {
        match self {
            Task::TrafficStatePred => &["HA", "VAR", "Persistence"],
            Task::MapMatching => &["HMMM"],
            Task::EvalRanking => &["Popularity", "Markov"],
        }
    }

    /// Metric used for leaderboards, and whether larger is better.
    pub fn primary_metric(self) -> (&'static str, bool) {
        match self {
            Task::TrafficStatePred => ("mae", false),
            Task::MapMatching => ("rmf", false),
            Task::EvalRanking => ("recall_at_k", true),
        }
    }

    /// Default search objective (a dotted path into the metrics) and its
    /// direction.
    pub fn default_objective(self) -> (&'static str, bool) {
        match self {
            Task::TrafficStatePred => ("validation.mae", false),
            Task::MapMatching => ("pooled.rmf", false),
            Task::EvalRanking => ("validation.recall_at_k", true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryMetric {
    pub name: String,
    pub value: f64,
    pub higher_is_better: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub task: Task,
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub config: BTreeMap<String, Value>,
    pub metrics: Value,
    pub primary: PrimaryMetric,
    pub wall_time_secs: f64,
    /// Where the record was written; not serialized.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl RunRecord {
    /// Look up a dotted path such as `validation.mae` in the metrics.
    pub fn metric(&self, path: &str) -> Option<f64> {
        let pointer = format!("/{}", path.replace('.', "/"));
        self.metrics.pointer(&pointer).and_then(Value::as_f64)
    }
}

/// A path that exists, else `$STKIT_DATA_DIR/<name>`.
pub fn resolve_dataset(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_dir() {
        return Ok(direct);
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let p = Path::new(&root).join(name);
        if p.is_dir() {
            return Ok(p);
        }
    }
    Err(BenchError::DatasetNotFound(name.into()))
}

fn execution(cfg: &Config) -> Result<Execution> {
    match cfg.str("execution")?.as_deref() {
        None | Some("parallel") => Ok(Execution::Parallel),
        Some("sequential") => Ok(Execution::Sequential),
        Some(other) => Err(BenchError::BadConfigValue {
            key: "execution".into(),
            reason: format!("`{other}` is not parallel or sequential"),
        }),
    }
}

struct TaskOutput {
    metrics: Value,
    primary: f64,
    predictions: String,
    extra: Vec<(&'static str, Vec<u8>)>,
}

/// Run one experiment from a merged config and persist it under
/// `<output_dir>/<run_id>/`.
pub fn cmd_run(cfg: &Config) -> Result<RunRecord> {
    let started = Instant::now();
    let task = Task::parse(&cfg.require_str("task")?)?;
    let model = cfg.require_str("model")?;
    if !task.models().contains(&model.as_str()) {
        return Err(BenchError::IncompatibleModelTask {
            model,
            task: task.as_str().into(),
        });
    }
    let dataset_arg = cfg.require_str("dataset")?;
    let dir = resolve_dataset(&dataset_arg)?;
    let ds = load_dataset(&dir)?;
    let out = match task {
        Task::TrafficStatePred => traffic(&ds, &model, cfg)?,
        Task::MapMatching => map_matching(&ds, &dir, cfg)?,
        Task::EvalRanking => eval_ranking(&ds, &model, cfg)?,
    };

    let output_dir = PathBuf::from(cfg.require_str("output_dir")?);
    let (run_id, run_dir) = claim_run_dir(&output_dir, cfg.str("run_id")?, ds.name(), &model)?;
    let (name, higher_is_better) = task.primary_metric();
    let record = RunRecord {
        run_id,
        task,
        model,
        dataset: ds.name().to_string(),
        seed: cfg.u64("seed")?.unwrap_or(0),
        config: cfg.values().clone(),
        metrics: out.metrics,
        primary: PrimaryMetric {
            name: name.into(),
            value: out.primary,
            higher_is_better,
        },
        wall_time_secs: started.elapsed().as_secs_f64(),
        dir: run_dir.clone(),
    };
    write_file(
        &run_dir.join(METRICS_FILE),
        (serde_json::to_string_pretty(&record.metrics)? + "\n").as_bytes(),
    )?;
    write_file(
        &run_dir.join(RECORD_FILE),
        (serde_json::to_string_pretty(&record)? + "\n").as_bytes(),
    )?;
    let path = run_dir.join(PREDICTIONS_FILE);
    let file = std::fs::File::create(&path).map_err(BenchError::io(&path))?;
    let mut gz = GzBuilder::new()
        .mtime(0)
        .write(file, Compression::default());
    gz.write_all(out.predictions.as_bytes())
        .map_err(BenchError::io(&path))?;
    gz.finish().map_err(BenchError::io(&path))?;
    for (name, bytes) in out.extra {
        write_file(&run_dir.join(name), &bytes)?;
    }
    Ok(record)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(BenchError::io(path))
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Create a fresh run directory. An explicit id is used as-is (and may
/// overwrite); otherwise `<dataset>_<model>_<utc time>` plus a counter.
fn claim_run_dir(
    output: &Path,
    explicit: Option<String>,
    dataset: &str,
    model: &str,
) -> Result<(String, PathBuf)> {
    std::fs::create_dir_all(output).map_err(BenchError::io(output))?;
    if let Some(id) = explicit {
        let dir = output.join(&id);
        std::fs::create_dir_all(&dir).map_err(BenchError::io(&dir))?;
        return Ok((id, dir));
    }
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    let base = format!("{}_{}_{stamp}", sanitize(dataset), sanitize(model));
    for n in 0.. {
        let id = if n == 0 {
            base.clone()
        } else {
            format!("{base}_{n}")
        };
        let dir = output.join(&id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(BenchError::io(&dir)(e)),
        }
    }
    unreachable!("counter is unbounded")
}

fn slice_time<T: Clone>(a: &ArrayD<T>, range: std::ops::Range<usize>) -> ArrayD<T> {
    a.slice_axis(Axis(0), Slice::from(range)).to_owned()
}

/// Tensor from whichever dynamic table the dataset carries.
pub fn dataset_tensor(ds: &AtomicDataset, features: &[String]) -> Result<(STTensor, MaskTensor)> {
    let interval = ds
        .manifest
        .interval_secs
        .ok_or_else(|| BenchError::Unusable("manifest has no interval_secs".into()))?;
    if let Some(dyna) = ds
        .dyna
        .as_ref()
        .filter(|d| d.iter().any(|r| r.dyna_type == DynaType::State))
    {
        let times = dyna
            .iter()
            .filter(|r| r.dyna_type == DynaType::State)
            .map(|r| r.time);
        let axis = build_time_axis(times, interval)?;
        return Ok(dyna_to_graph_tensor(
            dyna,
            &ds.geo_order(),
            &axis,
            features,
        )?);
    }
    if let Some(grid) = ds.grid.as_ref() {
        let dims = ds
            .manifest
            .grid
            .ok_or_else(|| BenchError::Unusable("grid table without manifest grid dims".into()))?;
        let axis = build_time_axis(grid.iter().map(|r| r.time), interval)?;
        return Ok(grid_to_tensor(grid, dims, &axis, features)?);
    }
    if let Some(od) = ds.od.as_ref() {
        let axis = build_time_axis(od.iter().map(|r| r.time), interval)?;
        return Ok(od_to_tensor(od, &ds.geo_order(), &axis, features)?);
    }
    Err(BenchError::Unusable(
        "no state .dyna, .grid or .od table".into(),
    ))
}

fn scaler_kind(cfg: &Config) -> Result<ScalerKind> {
    let name = cfg.str("scaler")?.unwrap_or_else(|| "none".into());
    serde_json::from_value(Value::String(name.to_lowercase())).map_err(|_| {
        BenchError::BadConfigValue {
            key: "scaler".into(),
            reason: format!("unknown scaler `{name}`"),
        }
    })
}

/// Stack per-sample forecasts `[N, T', ..]` and move the step axis first.
fn step_major(parts: &[ArrayD<f64>]) -> ArrayD<f64> {
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    let mut stacked = ndarray::stack(Axis(0), &views).expect("forecasts share a shape");
    stacked.swap_axes(0, 1);
    stacked
}

fn predict_all(
    model: &dyn ForecastModel,
    samples: &[Sample],
    batch_size: usize,
) -> Result<Vec<ArrayD<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for batch in make_batches(samples, batch_size, None)? {
        let pred = model.predict_batch(&batch)?;
        out.extend(pred.outer_iter().map(|p| p.to_owned()));
    }
    Ok(out)
}

fn traffic(ds: &AtomicDataset, model_name: &str, cfg: &Config) -> Result<TaskOutput> {
    let features: Vec<String> = match cfg.get("features") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| BenchError::BadConfigValue {
            key: "features".into(),
            reason: e.to_string(),
        })?,
        None => ds.manifest.features.clone(),
    };
    if features.is_empty() {
        return Err(BenchError::Unusable("no features declared".into()));
    }
    let (tensor, mask) = dataset_tensor(ds, &features)?;
    let window = WindowSpec {
        t_in: cfg.require_usize("input_window")?,
        t_out: cfg.require_usize("output_window")?,
    };
    let (train, val) = (
        cfg.require_f64("train_rate")?,
        cfg.require_f64("eval_rate")?,
    );
    let split = SplitSpec {
        train,
        val,
        test: 1.0 - train - val,
    };
    let exec = execution(cfg)?;
    let batch_size = cfg.require_usize("batch_size")?;
    let mape_floor = match cfg.f64("mape_floor")? {
        Some(f) => f,
        None if matches!(tensor.layout, Layout::Grid { .. } | Layout::GridOd { .. }) => {
            GRID_MAPE_FLOOR
        }
        None => 0.0,
    };

    let truth = split_then_window(&tensor, &mask, &split, window, exec)?;
    let train_slots = truth.slots[0].clone();
    let train_values = slice_time(&tensor.values, train_slots.clone());
    let train_mask = slice_time(&mask.0, train_slots.clone());
    let scaler = fit_scaler(
        scaler_kind(cfg)?,
        train_values.as_slice().expect("owned slice is contiguous"),
        train_mask.as_slice().expect("owned slice is contiguous"),
    )?;
    let scaled = STTensor {
        values: scaler.apply(&tensor.values)?,
        ..tensor.clone()
    };
    let inputs = split_then_window(&scaled, &mask, &split, window, exec)?;
    let scaled_train = slice_time(&scaled.values, train_slots.clone());

    let model: Box<dyn ForecastModel> = match model_name {
        "HA" => {
            let period = match cfg.u64("ha_period")? {
                Some(p) => p as usize,
                None => tensor.axis.slots_per_day().unwrap_or(1),
            };
            Box::new(ha_fit(
                scaled_train.view(),
                train_mask.view(),
                train_slots.start,
                period,
            )?)
        }
        "VAR" => Box::new(var_fit(
            scaled_train.view(),
            train_mask.view(),
            cfg.require_usize("var_order")?,
            cfg.require_usize("var_max_series")?,
        )?),
        _ => Box::new(Persistence),
    };

    let unscale = |parts: Vec<ArrayD<f64>>| -> Vec<ArrayD<f64>> {
        parts.iter().map(|p| scaler.inverse(p)).collect()
    };
    let test_pred = unscale(predict_all(model.as_ref(), &inputs.test, batch_size)?);
    let val_pred = unscale(predict_all(model.as_ref(), &inputs.val, batch_size)?);

    let t_out = window.t_out;
    let horizons: Vec<usize> = if t_out >= 12 {
        vec![3, 6, 12]
    } else {
        vec![t_out]
    };
    let pred = step_major(&test_pred);
    let y = step_major(&truth.test.iter().map(|s| s.y.clone()).collect::<Vec<_>>());
    let y_mask = {
        let parts: Vec<ArrayD<bool>> = truth.test.iter().map(|s| s.y_mask.clone()).collect();
        let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
        let mut m = ndarray::stack(Axis(0), &views).expect("masks share a shape");
        m.swap_axes(0, 1);
        m
    };
    let report = evaluate_forecast(pred.view(), y.view(), y_mask.view(), &horizons, mape_floor)?;

    let flat = |parts: &[ArrayD<f64>]| {
        parts
            .iter()
            .flat_map(|p| p.iter().copied())
            .collect::<Vec<f64>>()
    };
    let val_truth: Vec<ArrayD<f64>> = truth.val.iter().map(|s| s.y.clone()).collect();
    let val_mask: Vec<bool> = truth
        .val
        .iter()
        .flat_map(|s| s.y_mask.iter().copied())
        .collect();
    let validation =
        regression_metrics(&flat(&val_truth), &flat(&val_pred), &val_mask, mape_floor)?;

    let mut csv = String::from("sample_start,horizon,cell,prediction,truth,mask\n");
    for (s, p) in truth.test.iter().zip(&test_pred) {
        let cells = p.len() / t_out.max(1);
        for (i, ((pv, tv), mv)) in p.iter().zip(s.y.iter()).zip(s.y_mask.iter()).enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                s.start,
                i / cells + 1,
                i % cells,
                pv,
                tv,
                u8::from(*mv)
            );
        }
    }

    let metrics = json!({
        "test": report,
        "validation": validation,
        "samples": {
            "train": truth.train.len(),
            "validation": truth.val.len(),
            "test": truth.test.len(),
        },
        "horizons": horizons,
        "scaler": scaler,
        "mape_floor": mape_floor,
    });
    Ok(TaskOutput {
        primary: report.all.mae,
        metrics,
        predictions: csv,
        extra: Vec::new(),
    })
}

fn match_params(cfg: &Config) -> Result<MatchParams> {
    Ok(MatchParams {
        sigma: cfg.require_f64("sigma")?,
        beta: cfg.require_f64("beta")?,
        radius: cfg.require_f64("radius")?,
        max_candidates: cfg.require_usize("max_candidates")?,
    })
}

fn map_matching(ds: &AtomicDataset, dir: &Path, cfg: &Config) -> Result<TaskOutput> {
    let params = match_params(cfg)?;
    params.validate()?;
    let geo = ds.geo.as_deref().unwrap_or_default();
    let rel = ds.rel.as_deref().unwrap_or_default();
    let net = build_road_network(geo, rel, params.radius)?;
    let trajs = build_trajectories(ds.dyna.as_deref().unwrap_or_default());
    if trajs.is_empty() {
        return Err(BenchError::Unusable("no trajectory rows".into()));
    }
    let coords = trajs
        .iter()
        .map(|t| {
            t.points
                .iter()
                .map(|p| p.coord)
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| {
                    BenchError::Unusable(format!(
                        "trajectory {} has points without lon/lat",
                        t.user_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let results = match_all(&net, &coords, &params, execution(cfg)?);

    let routes_path = dir.join(ROUTES_FILE);
    let routes: Option<BTreeMap<String, Vec<String>>> = if routes_path.is_file() {
        let text = std::fs::read_to_string(&routes_path).map_err(BenchError::io(&routes_path))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    let mut reports = Vec::new();
    let mut per_traj = BTreeMap::new();
    let (mut matched, mut total, mut breaks, mut failed) = (0usize, 0usize, 0usize, 0usize);
    let mut csv = String::from("entity_id,point,segment,lon,lat,distance,log_prob\n");
    let mut matched_rows = Vec::new();
    for (t, r) in trajs.iter().zip(results) {
        total += t.len();
        let route: Vec<(String, f64)> = match r {
            Ok(m) => {
                matched += m.matched_count();
                breaks += m.breaks.len();
                for (i, p) in m.points.iter().enumerate() {
                    if let Some(p) = p {
                        let _ = writeln!(
                            csv,
                            "{},{i},{},{},{},{},{}",
                            t.user_id,
                            p.segment,
                            p.projection.lon,
                            p.projection.lat,
                            p.distance,
                            p.log_prob
                        );
                    }
                }
                let times: Vec<_> = t.points.iter().map(|p| p.time).collect();
                matched_rows.extend(matched_dyna_records(
                    &t.user_id,
                    &times,
                    &m,
                    matched_rows.len(),
                ));
                m.route(&net)
            }
            Err(MatchError::NoCandidatesAnywhere) => {
                failed += 1;
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(truth) = routes.as_ref().and_then(|r| r.get(&t.user_id)) {
            let truth: Vec<(String, f64)> = truth
                .iter()
                .map(|id| (id.clone(), net.segment(id).map_or(0.0, |s| s.length())))
                .collect();
            let rep = match_metrics(&truth, &route)?;
            per_traj.insert(t.user_id.clone(), rep);
            reports.push(rep);
        }
    }
    let pooled: Option<MatchReport> = if reports.is_empty() {
        None
    } else {
        Some(MatchReport::pooled(&reports)?)
    };
    let mut dyna_bytes = Vec::new();
    write_table(&matched_rows, &mut dyna_bytes)?;
    let metrics = json!({
        "pooled": pooled,
        "trajectories": trajs.len(),
        "failed_trajectories": failed,
        "points": total,
        "matched_points": matched,
        "breaks": breaks,
        "per_trajectory": per_traj,
    });
    Ok(TaskOutput {
        primary: pooled.map_or(f64::NAN, |p| p.rmf),
        metrics,
        predictions: csv,
        extra: vec![(MATCHED_FILE, dyna_bytes)],
    })
}

fn window_spec(cfg: &Config) -> Result<TrajWindowSpec> {
    let size = cfg.u64("window_size")?.unwrap_or(72 * 3600);
    let mode = match cfg.str("window_type")?.as_deref() {
        None | Some("time") => TrajWindowMode::Time,
        Some("length") => TrajWindowMode::Length,
        Some(other) => {
            return Err(BenchError::BadConfigValue {
                key: "window_type".into(),
                reason: format!("`{other}` is not time or length"),
            })
        }
    };
    Ok(TrajWindowSpec::new(mode, size)?)
}

/// Truth, ranked list and `(user, trajectory, prefix length)` per case.
type RankingCases = (Vec<String>, Vec<Vec<String>>, Vec<(String, usize, usize)>);

/// Next-location cases: every prefix of every trajectory predicts the
/// following location.
fn ranking_cases(model: &dyn LocationRanker, trajs: &[Trajectory], k: usize) -> RankingCases {
    let (mut truth, mut ranked, mut keys) = (Vec::new(), Vec::new(), Vec::new());
    for (ti, t) in trajs.iter().enumerate() {
        let locs: Vec<&str> = t
            .points
            .iter()
            .filter_map(|p| p.location.as_deref())
            .collect();
        for i in 1..locs.len() {
            truth.push(locs[i].to_string());
            ranked.push(model.rank(&t.user_id, &locs[..i], k));
            keys.push((t.user_id.clone(), ti, i));
        }
    }
    (truth, ranked, keys)
}

fn eval_ranking(ds: &AtomicDataset, model_name: &str, cfg: &Config) -> Result<TaskOutput> {
    let k = cfg.require_usize("topk")?;
    let spec = window_spec(cfg)?;
    let cut: Vec<Trajectory> = build_trajectories(ds.dyna.as_deref().unwrap_or_default())
        .iter()
        .flat_map(|t| cut_trajectory(t, spec))
        .collect();
    let filtered = filter_trajectories(
        cut,
        FilterThresholds {
            min_points: cfg.require_usize("min_points")?,
            min_trajs_per_user: cfg.require_usize("min_trajs_per_user")?,
            min_visits_per_location: cfg.require_usize("min_visits_per_location")?,
        },
    );
    let (train, val) = (
        cfg.require_f64("train_rate")?,
        cfg.require_f64("eval_rate")?,
    );
    let [train_set, val_set, test_set] = split_user_trajectories(
        &filtered,
        &SplitSpec {
            train,
            val,
            test: 1.0 - train - val,
        },
    )?;
    let model: Box<dyn LocationRanker> = match model_name {
        "Markov" => Box::new(Markov::fit(&train_set)),
        _ => Box::new(Popularity::fit(&train_set)),
    };
    let (truth, ranked, keys) = ranking_cases(model.as_ref(), &test_set, k);
    let test = ranking_metrics(&truth, &ranked, k)?;
    let (vt, vr, _) = ranking_cases(model.as_ref(), &val_set, k);
    let validation = ranking_metrics(&vt, &vr, k)?;

    let mut csv = String::from("entity_id,trajectory,position,truth,ranked\n");
    for ((user, ti, pos), (t, r)) in keys.iter().zip(truth.iter().zip(&ranked)) {
        let _ = writeln!(csv, "{user},{ti},{pos},{t},{}", r.join(" "));
    }
    let metrics = json!({
        "test": test,
        "validation": validation,
        "trajectories": {
            "train": train_set.len(),
            "validation": val_set.len(),
            "test": test_set.len(),
        },
    });
    Ok(TaskOutput {
        primary: test.recall_at_k,
        metrics,
        predictions: csv,
        extra: Vec::new(),
    })
}
