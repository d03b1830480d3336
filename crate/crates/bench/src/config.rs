//! Layered configuration: defaults < user file < search trial < command line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{BenchError, Result};

/// Keys accepted directly on the command line. Everything else goes through
/// a config file.
pub const CLI_WHITELIST: [&str; 10] = [
    "task",
    "model",
    "dataset",
    "config_file",
    "seed",
    "output_dir",
    "batch_size",
    "space_file",
    "search_alg",
    "learning_rate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Default,
    UserFile,
    Search,
    Cli,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Config {
    values: BTreeMap<String, Value>,
    provenance: BTreeMap<String, Layer>,
}

impl Config {
    pub fn from_layer(values: BTreeMap<String, Value>, layer: Layer) -> Config {
        let provenance = values.keys().map(|k| (k.clone(), layer)).collect();
        Config { values, provenance }
    }

    /// Per key, the entry from the higher layer wins; within one layer the
    /// right-hand side wins. The operation is associative.
    pub fn merge(&self, other: &Config) -> Config {
        let mut out = self.clone();
        for (k, v) in &other.values {
            let layer = other.provenance[k];
            if out.provenance.get(k).is_none_or(|l| layer >= *l) {
                out.values.insert(k.clone(), v.clone());
                out.provenance.insert(k.clone(), layer);
            }
        }
        out
    }

    pub fn set(&mut self, key: &str, value: Value, layer: Layer) {
        *self = self.merge(&Config::from_layer(
            BTreeMap::from([(key.to_string(), value)]),
            layer,
        ));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key).filter(|v| !v.is_null())
    }

    pub fn provenance(&self, key: &str) -> Option<Layer> {
        self.provenance.get(key).copied()
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    fn bad(key: &str, want: &str, v: &Value) -> BenchError {
        BenchError::BadConfigValue {
            key: key.into(),
            reason: format!("expected {want}, got {v}"),
        }
    }

    pub fn str(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(Value::Bool(b)) => Ok(Some(b.to_string())),
            Some(v) => Err(Self::bad(key, "a string", v)),
        }
    }

    pub fn require_str(&self, key: &str) -> Result<String> {
        self.str(key)?
            .ok_or_else(|| BenchError::MissingKey(key.into()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| Self::bad(key, "a number", &json!(s))),
            Some(v) => Err(Self::bad(key, "a number", v)),
        }
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.f64(key)?
            .ok_or_else(|| BenchError::MissingKey(key.into()))
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => match n.as_u64() {
                Some(u) => Ok(Some(u)),
                None => Err(Self::bad(
                    key,
                    "a non-negative integer",
                    &Value::Number(n.clone()),
                )),
            },
            Some(Value::String(s)) => s
                .parse()
                .map(Some)
                .map_err(|_| Self::bad(key, "a non-negative integer", &json!(s))),
            Some(v) => Err(Self::bad(key, "a non-negative integer", v)),
        }
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.u64(key)?
            .map(|v| v as usize)
            .ok_or_else(|| BenchError::MissingKey(key.into()))
    }
}

/// Split `--key value` / `--key=value` pairs. Keys keep their spelling.
pub fn parse_cli_pairs(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(BenchError::UnknownCliKey(a.clone()));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| BenchError::MissingCliValue(flag.into()))?;
                out.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Command-line text as JSON when it parses as a JSON scalar, else a string.
pub fn cli_value(raw: &str) -> Value {
    match serde_json::from_str::<Value>(raw) {
        Ok(v @ (Value::Number(_) | Value::Bool(_) | Value::Null)) => v,
        _ => Value::String(raw.to_string()),
    }
}

pub fn read_user_file(path: &Path) -> Result<BTreeMap<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::BadConfigFile {
        path: path.into(),
        reason: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| BenchError::BadConfigFile {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Merge defaults, the user file (if any) and command-line pairs. Only
/// whitelisted keys may come from the command line.
pub fn load_config(
    cli: &[(String, String)],
    user_file: Option<&Path>,
    defaults: &BTreeMap<String, Value>,
) -> Result<Config> {
    let mut cli_map = BTreeMap::new();
    for (k, v) in cli {
        if !CLI_WHITELIST.contains(&k.as_str()) {
            return Err(BenchError::UnknownCliKey(k.clone()));
        }
        cli_map.insert(k.clone(), cli_value(v));
    }
    let file = match user_file {
        Some(p) => read_user_file(p)?,
        None => BTreeMap::new(),
    };
    Ok(Config::from_layer(defaults.clone(), Layer::Default)
        .merge(&Config::from_layer(file, Layer::UserFile))
        .merge(&Config::from_layer(cli_map, Layer::Cli)))
}

/// [`load_config`] where the user file is whatever `--config_file` names.
pub fn load_cli_config(args: &[String], task_hint: Option<&str>) -> Result<Config> {
    let pairs = parse_cli_pairs(args)?;
    let file = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "config_file")
        .map(|(_, v)| std::path::PathBuf::from(v));
    let task = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "task")
        .map(|(_, v)| v.as_str())
        .or(task_hint);
    let mut defaults = default_config(task);
    // the task may also come from the file; defaults depend on it
    if task.is_none() {
        if let Some(path) = &file {
            if let Some(Value::String(t)) = read_user_file(path)?.get("task") {
                defaults = default_config(Some(t));
            }
        }
    }
    load_config(&pairs, file.as_deref(), &defaults)
}

/// Defaults for every key the runner reads. Some depend on the task.
pub fn default_config(task: Option<&str>) -> BTreeMap<String, Value> {
    let ranking = task == Some("eval_ranking");
    let mut d = BTreeMap::new();
    let mut put = |k: &str, v: Value| {
        d.insert(k.to_string(), v);
    };
    put("seed", json!(0));
    put("output_dir", json!("runs"));
    put("batch_size", json!(64));
    put("learning_rate", json!(0.01));
    put("search_alg", json!("GridSearch"));
    put("n_trials", json!(10));
    put("maximize", json!(false));
    put("execution", json!("parallel"));
    // traffic state prediction
    put("input_window", json!(12));
    put("output_window", json!(12));
    put("train_rate", json!(if ranking { 0.6 } else { 0.7 }));
    put("eval_rate", json!(if ranking { 0.2 } else { 0.1 }));
    put("scaler", json!("none"));
    // unset: 5 for grid layouts, 0 otherwise
    put("mape_floor", Value::Null);
    put("ha_period", Value::Null);
    put("var_order", json!(1));
    put("var_max_series", json!(400));
    // map matching
    put("sigma", json!(10.0));
    put("beta", json!(5.0));
    put("radius", json!(200.0));
    put("max_candidates", json!(10));
    // ranking
    put("topk", json!(5));
    put("min_points", json!(4));
    put("min_trajs_per_user", json!(2));
    put("min_visits_per_location", json!(0));
    put("window_type", json!("time"));
    put("window_size", json!(72 * 3600));
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn defaults() -> BTreeMap<String, Value> {
        BTreeMap::from([
            ("learning_rate".to_string(), json!(0.01)),
            ("seed".to_string(), json!(0)),
        ])
    }

    #[test]
    fn cli_beats_file_beats_default() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"learning_rate": 0.005}}"#).unwrap();
        let cli = vec![("learning_rate".to_string(), "0.1".to_string())];
        let c = load_config(&cli, Some(f.path()), &defaults()).unwrap();
        assert_eq!(c.f64("learning_rate").unwrap(), Some(0.1));
        assert_eq!(c.provenance("learning_rate"), Some(Layer::Cli));
        assert_eq!(c.u64("seed").unwrap(), Some(0));
        assert_eq!(c.provenance("seed"), Some(Layer::Default));
    }

    #[test]
    fn rejects_unknown_key() {
        let cli = vec![("bogus".to_string(), "1".to_string())];
        assert!(matches!(
            load_config(&cli, None, &defaults()),
            Err(BenchError::UnknownCliKey(k)) if k == "bogus"
        ));
    }

    #[test]
    fn bad_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "not json").unwrap();
        assert!(matches!(
            load_config(&[], Some(f.path()), &defaults()),
            Err(BenchError::BadConfigFile { .. })
        ));
    }

    #[test]
    fn pairs() {
        let args: Vec<String> = ["--task", "x", "--seed=3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            parse_cli_pairs(&args).unwrap(),
            vec![("task".into(), "x".into()), ("seed".into(), "3".into())]
        );
        assert!(matches!(
            parse_cli_pairs(&["--task".to_string()]),
            Err(BenchError::MissingCliValue(_))
        ));
        assert_eq!(cli_value("0.1"), json!(0.1));
        assert_eq!(cli_value("HA"), json!("HA"));
        assert_eq!(cli_value("[1]"), json!("[1]"));
    }

    #[test]
    fn lower_layer_merged_later_does_not_win() {
        let cli = Config::from_layer(BTreeMap::from([("a".into(), json!(1))]), Layer::Cli);
        let file = Config::from_layer(BTreeMap::from([("a".into(), json!(2))]), Layer::UserFile);
        assert_eq!(cli.merge(&file).get("a"), Some(&json!(1)));
    }
}
