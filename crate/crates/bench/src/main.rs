use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use stkit_bench::commands::{cmd_convert, cmd_stats, cmd_validate};
use stkit_bench::config::load_cli_config;
use stkit_bench::leaderboard::cmd_leaderboard;
use stkit_bench::runner::{cmd_run, resolve_dataset, Task};
use stkit_bench::search::cmd_tune;
use stkit_bench::synthetic::{generate_synthetic, SyntheticKind};
use stkit_bench::{BenchError, Result};
use stkit_core::atomic::Manifest;

#[derive(Parser)]
#[command(
    name = "stkit",
    version,
    about = "Spatial-temporal data toolkit and benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment: --task T --model M --dataset D [--config_file F] [--seed S] ...
    Run {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        args: Vec<String>,
    },
    /// Hyper-parameter search: --space_file F --search_alg {GridSearch,RandomSearch} plus run flags
    Tune {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0..)]
        args: Vec<String>,
    },
    /// Validate an atomic-file dataset directory
    Validate { dataset: String },
    /// Row counts per table and the time span
    Stats {
        dataset: String,
        #[arg(long)]
        json: bool,
    },
    /// Convert a raw CSV into atomic files
    Convert {
        #[arg(long)]
        raw: PathBuf,
        /// JSON column mapping
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        interval_secs: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Rank models per dataset from saved runs
    Leaderboard {
        dir: PathBuf,
        #[arg(long)]
        task: String,
        /// Also write the table as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic dataset
    Generate {
        /// graph_flow, grid_flow, road_network, trajectories or checkins
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator parameters as inline JSON or a path to a JSON file
        #[arg(long)]
        params: Option<String>,
    },
}

fn params_value(raw: Option<&str>) -> Result<Value> {
    let Some(raw) = raw else {
        return Ok(Value::Object(Default::default()));
    };
    let text = if Path::new(raw).is_file() {
        std::fs::read_to_string(raw).map_err(BenchError::io(raw))?
    } else {
        raw.to_string()
    };
    serde_json::from_str(&text).map_err(|e| BenchError::BadConfigValue {
        key: "params".into(),
        reason: e.to_string(),
    })
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { args } => {
            let cfg = load_cli_config(&args, None)?;
            let rec = cmd_run(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&rec.metrics)?);
            eprintln!("run {} written to {}", rec.run_id, rec.dir.display());
        }
        Command::Tune { args } => {
            let cfg = load_cli_config(&args, None)?;
            let out = cmd_tune(&cfg)?;
            for t in &out.trials {
                match (&t.objective, &t.error) {
                    (Some(v), _) => println!(
                        "trial {:03} {} = {v}  {}",
                        t.index,
                        out.objective,
                        Value::from_iter(t.params.clone())
                    ),
                    (None, e) => println!(
                        "trial {:03} failed: {}",
                        t.index,
                        e.as_deref().unwrap_or("?")
                    ),
                }
            }
            match out.best_trial() {
                Some(b) => println!(
                    "best trial {:03} ({})",
                    b.index,
                    b.run_id.as_deref().unwrap_or("")
                ),
                None => {
                    eprintln!("every trial failed");
                    return Ok(ExitCode::from(4));
                }
            }
        }
        Command::Validate { dataset } => {
            let report = cmd_validate(&resolve_dataset(&dataset)?)?;
            for f in &report.findings {
                println!("{f}");
            }
            if !report.is_ok() {
                return Ok(ExitCode::from(2));
            }
            println!("ok");
        }
        Command::Stats { dataset, json } => {
            let s = cmd_stats(&resolve_dataset(&dataset)?)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{s}");
            }
        }
        Command::Convert {
            raw,
            spec,
            out,
            name,
            interval_secs,
            features,
        } => {
            let manifest = Manifest {
                name,
                interval_secs,
                features,
                ..Default::default()
            };
            let report = cmd_convert(&raw, &spec, manifest, &out)?;
            for f in &report.findings {
                println!("{f}");
            }
            if !report.is_ok() {
                return Ok(ExitCode::from(2));
            }
            println!("wrote {}", out.display());
        }
        Command::Leaderboard { dir, task, csv } => {
            let lb = cmd_leaderboard(&dir, Task::parse(&task)?)?;
            print!("{}", lb.to_text());
            if let Some(path) = csv {
                std::fs::write(&path, lb.to_csv()).map_err(BenchError::io(&path))?;
            }
        }
        Command::Generate {
            kind,
            out,
            seed,
            params,
        } => {
            let kind: SyntheticKind = kind.parse()?;
            let g = generate_synthetic(kind, &params_value(params.as_deref())?, seed)?;
            g.save(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
