//! Grid and random hyper-parameter search.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use stkit_core::Execution;

use crate::config::{Config, Layer};
use crate::error::{BenchError, Result};
use crate::runner::{cmd_run, RunRecord, Task};

pub const SEARCH_SUMMARY_FILE: &str = "search.json";

/// One parameter's domain. A bare JSON array is shorthand for `choice`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DomainRepr")]
pub enum Domain {
    Choice { values: Vec<Value> },
    Int { low: i64, high: i64 },
    Real { low: f64, high: f64, log: bool },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DomainRepr {
    List(Vec<Value>),
    Tagged(TaggedDomain),
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum TaggedDomain {
    Choice {
        values: Vec<Value>,
    },
    Int {
        low: i64,
        high: i64,
    },
    Real {
        low: f64,
        high: f64,
        #[serde(default)]
        log: bool,
    },
}

impl From<DomainRepr> for Domain {
    fn from(r: DomainRepr) -> Self {
        match r {
            DomainRepr::List(values) => Domain::Choice { values },
            DomainRepr::Tagged(TaggedDomain::Choice { values }) => Domain::Choice { values },
            DomainRepr::Tagged(TaggedDomain::Int { low, high }) => Domain::Int { low, high },
            DomainRepr::Tagged(TaggedDomain::Real { low, high, log }) => {
                Domain::Real { low, high, log }
            }
        }
    }
}

impl Domain {
    fn check(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(BenchError::BadSearchSpace(format!("`{name}`: {why}")));
        match self {
            Domain::Choice { values } if values.is_empty() => bad("empty choice list"),
            Domain::Int { low, high } if low > high => bad("low > high"),
            Domain::Real { low, high, .. }
                if !(low.is_finite() && high.is_finite() && low <= high) =>
            {
                bad("bounds must be finite with low <= high")
            }
            Domain::Real { low, log: true, .. } if *low <= 0.0 => bad("log range needs low > 0"),
            _ => Ok(()),
        }
    }

    /// Finite enumeration, or `None` for a continuous range.
    fn values(&self) -> Option<Vec<Value>> {
        match self {
            Domain::Choice { values } => Some(values.clone()),
            Domain::Int { low, high } => Some((*low..=*high).map(|v| json!(v)).collect()),
            Domain::Real { .. } => None,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            Domain::Choice { values } => values[rng.random_range(0..values.len())].clone(),
            Domain::Int { low, high } => json!(rng.random_range(*low..=*high)),
            Domain::Real { low, high, log } => {
                let u: f64 = rng.random();
                let v = if *log {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                };
                json!(v.clamp(*low, *high))
            }
        }
    }
}

pub type Params = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace(pub BTreeMap<String, Domain>);

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(BenchError::BadSearchSpace("no parameters".into()));
        }
        for (name, d) in &self.0 {
            d.check(name)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SearchSpace> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::BadConfigFile {
            path: path.into(),
            reason: e.to_string(),
        })?;
        let space: SearchSpace =
            serde_json::from_str(&text).map_err(|e| BenchError::BadConfigFile {
                path: path.into(),
                reason: e.to_string(),
            })?;
        space.validate()?;
        Ok(space)
    }
}

/// Full cross product, last parameter (by name) varying fastest.
pub fn grid_points(space: &SearchSpace) -> Result<Vec<Params>> {
    space.validate()?;
    let mut points = vec![Params::new()];
    for (name, d) in &space.0 {
        let values = d
            .values()
            .ok_or_else(|| BenchError::ContinuousDomainInGrid(name.clone()))?;
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

pub fn random_points(space: &SearchSpace, n_trials: usize, seed: u64) -> Result<Vec<Params>> {
    space.validate()?;
    if n_trials == 0 {
        return Err(BenchError::BadConfigValue {
            key: "n_trials".into(),
            reason: "must be at least 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_trials)
        .map(|_| {
            space
                .0
                .iter()
                .map(|(k, d)| (k.clone(), d.sample(&mut rng)))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    pub run_id: Option<String>,
    pub objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub objective: String,
    pub maximize: bool,
    pub trials: Vec<Trial>,
    /// Index into `trials`.
    pub best: Option<usize>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }
}

/// Index of the best objective; ties go to the earlier trial and NaN never
/// wins.
pub fn select_best(objectives: &[Option<f64>], maximize: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in objectives.iter().enumerate() {
        let Some(v) = v.filter(|v| !v.is_nan()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((_, b)) => {
                if maximize {
                    v > b
                } else {
                    v < b
                }
            }
        };
        if better {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluate every point (possibly in parallel) and pick the best. A trial
/// that fails is kept with its error; a successful trial without the
/// objective aborts the search.
pub fn run_search<F>(
    points: &[Params],
    objective: &str,
    maximize: bool,
    exec: Execution,
    runner: F,
) -> Result<SearchOutcome>
where
    F: Fn(usize, &Params) -> Result<RunRecord> + Sync + Send,
{
    let indexed: Vec<(usize, &Params)> = points.iter().enumerate().collect();
    let results = exec.map(&indexed, |(i, p)| runner(*i, p));
    let mut trials = Vec::with_capacity(points.len());
    for ((i, p), r) in indexed.into_iter().zip(results) {
        let trial = match r {
            Ok(rec) => {
                let v = rec
                    .metric(objective)
                    .ok_or_else(|| BenchError::MissingObjective(objective.into()))?;
                Trial {
                    index: i,
                    params: p.clone(),
                    run_id: Some(rec.run_id),
                    objective: Some(v),
                    error: None,
                }
            }
            Err(e) => Trial {
                index: i,
                params: p.clone(),
                run_id: None,
                objective: None,
                error: Some(e.to_string()),
            },
        };
        trials.push(trial);
    }
    let objectives: Vec<Option<f64>> = trials.iter().map(|t| t.objective).collect();
    Ok(SearchOutcome {
        objective: objective.into(),
        maximize,
        best: select_best(&objectives, maximize),
        trials,
    })
}

pub fn grid_search<F>(
    space: &SearchSpace,
    objective: &str,
    maximize: bool,
    exec: Execution,
    runner: F,
) -> Result<SearchOutcome>
where
    F: Fn(usize, &Params) -> Result<RunRecord> + Sync + Send,
{
    run_search(&grid_points(space)?, objective, maximize, exec, runner)
}

pub fn random_search<F>(
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    objective: &str,
    maximize: bool,
    exec: Execution,
    runner: F,
) -> Result<SearchOutcome>
where
    F: Fn(usize, &Params) -> Result<RunRecord> + Sync + Send,
{
    run_search(
        &random_points(space, n_trials, seed)?,
        objective,
        maximize,
        exec,
        runner,
    )
}

/// `tune`: run one `run` per trial with the trial's parameters layered over
/// the base config, then write `search.json` to the output directory.
pub fn cmd_tune(cfg: &Config) -> Result<SearchOutcome> {
    let space = SearchSpace::load(Path::new(&cfg.require_str("space_file")?))?;
    for name in space.0.keys() {
        if cfg.provenance(name) == Some(Layer::Cli) {
            return Err(BenchError::BadSearchSpace(format!(
                "`{name}` is also set on the command line, which would override every trial"
            )));
        }
    }
    let task = Task::parse(&cfg.require_str("task")?)?;
    let (default_obj, default_max) = task.default_objective();
    let objective = cfg
        .str("objective")?
        .unwrap_or_else(|| default_obj.to_string());
    let maximize = if cfg
        .provenance("maximize")
        .is_some_and(|l| l > Layer::Default)
    {
        cfg.get("maximize")
            .and_then(Value::as_bool)
            .unwrap_or(false)
    } else {
        cfg.get("objective").is_none() && default_max
    };
    let base = match cfg.str("run_id")? {
        Some(id) => id,
        None => format!(
            "tune_{}_{}",
            cfg.require_str("model")?,
            chrono::Utc::now().format("%Y%m%dT%H%M%S")
        ),
    };
    let runner = |i: usize, p: &Params| {
        let mut trial = cfg.merge(&Config::from_layer(p.clone(), Layer::Search));
        trial.set(
            "run_id",
            json!(format!("{base}_trial{i:03}")),
            Layer::Search,
        );
        cmd_run(&trial)
    };
    let alg = cfg.require_str("search_alg")?;
    // trials share the pool; each run stays sequential inside
    let exec = Execution::Parallel;
    let outcome = match alg.as_str() {
        "GridSearch" => grid_search(&space, &objective, maximize, exec, runner)?,
        "RandomSearch" => {
            let n = cfg.require_usize("n_trials")?;
            let seed = cfg.u64("seed")?.unwrap_or(0);
            random_search(&space, n, seed, &objective, maximize, exec, runner)?
        }
        other => {
            return Err(BenchError::BadConfigValue {
                key: "search_alg".into(),
                reason: format!("`{other}` is not GridSearch or RandomSearch"),
            })
        }
    };
    let out =
        Path::new(&cfg.require_str("output_dir")?).join(format!("{base}_{SEARCH_SUMMARY_FILE}"));
    std::fs::write(&out, serde_json::to_string_pretty(&outcome)? + "\n")
        .map_err(BenchError::io(&out))?;
    Ok(outcome)
}
