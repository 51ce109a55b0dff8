//! Executes a scenario: builds data per repeat, runs every solver, writes
//! traces and a summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use scaledsgd::metrics::Verdict;
use scaledsgd::problem::{generate, holdout_entries, load_csv, split, LoadOptions};
use scaledsgd::solvers::{Evaluation, NullSink, Solver, TestMetric};
use scaledsgd::ObservedMatrix;

use crate::error::BenchError;
use crate::output::{mean_std, write_json, write_trace};
use crate::scenario::{DataSource, Scale, Scenario};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scale: Scale,
    /// Overrides the scenario's base seed.
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
    /// Record wall-clock columns. Off by default so reruns are byte-identical.
    pub timing: bool,
    /// Replaces the CSV path of a file-backed scenario.
    pub data: Option<PathBuf>,
    /// Directory that relative CSV paths resolve against.
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub cost: Option<f64>,
    pub mse: Option<f64>,
    pub rel_residual: Option<f64>,
    pub test_metric: Option<f64>,
    pub epochs: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub seed: u64,
    pub epochs: usize,
    pub verdict: Verdict,
    pub diverged: bool,
    pub rollbacks: usize,
    pub initial_cost: f64,
    pub initial_step: Option<f64>,
    pub final_cost: f64,
    pub final_mse: f64,
    pub final_rel_residual: f64,
    pub final_test_metric: Option<f64>,
    pub trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub label: String,
    pub engine: String,
    pub runs: Vec<RunSummary>,
    pub mean: Stats,
    /// Sample standard deviation across repeats.
    pub stddev: Stats,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub m: usize,
    pub known_entries: Vec<usize>,
    pub test_entries: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub version: String,
    pub scale: Scale,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<String>,
    pub seed: u64,
    pub repeats: usize,
    pub rank: usize,
    pub data: DataSummary,
    pub solvers: Vec<SolverSummary>,
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub summary: Summary,
}

struct Prepared {
    train: ObservedMatrix,
    test: Option<ObservedMatrix>,
}

fn data_err(scenario: &Scenario, message: impl ToString) -> BenchError {
    BenchError::Data {
        scenario: scenario.name.clone(),
        message: message.to_string(),
    }
}

/// Picks a scenario file, or a built-in when no such file exists.
pub fn resolve(spec: &str) -> Result<(Scenario, Option<PathBuf>), BenchError> {
    let path = Path::new(spec);
    if path.is_file() {
        let scenario = Scenario::from_path(path)?;
        let dir = path.parent().map(Path::to_path_buf);
        return Ok((scenario, dir));
    }
    crate::builtin::get(spec)
        .map(|s| (s, None))
        .ok_or_else(|| BenchError::UnknownScenario(spec.to_string()))
}

fn csv_path(source: &Path, options: &RunOptions) -> PathBuf {
    if let Some(p) = &options.data {
        return p.clone();
    }
    match &options.base_dir {
        Some(dir) if source.is_relative() => dir.join(source),
        _ => source.to_path_buf(),
    }
}

fn prepare(
    scenario: &Scenario,
    options: &RunOptions,
    seeds: &[u64],
) -> Result<Vec<Prepared>, BenchError> {
    let holdout = scenario
        .evaluation
        .as_ref()
        .and_then(|e| e.holdout)
        .unwrap_or(0);
    let per_row = scenario
        .evaluation
        .as_ref()
        .and_then(|e| e.per_row_holdout)
        .unwrap_or(0);
    match scenario.data_for(options.scale) {
        DataSource::Generate(spec) => seeds
            .iter()
            .map(|&seed| {
                let spec = spec.clone().with_seed(seed);
                let (train, truth) = generate(&spec).map_err(|e| data_err(scenario, e))?;
                let test = match holdout {
                    0 => None,
                    h => Some(
                        holdout_entries(&truth, &train, h, seed)
                            .map_err(|e| data_err(scenario, e))?,
                    ),
                };
                Ok(Prepared { train, test })
            })
            .collect(),
        DataSource::Csv(c) => {
            let path = csv_path(&c.path, options);
            if !path.is_file() {
                return Err(data_err(
                    scenario,
                    format!("dataset {} not found (pass --data)", path.display()),
                ));
            }
            let load = LoadOptions {
                dims: c.rows.zip(c.cols),
                skip_value: c.skip_value,
            };
            let full = load_csv(&path, &load)
                .map_err(|e| data_err(scenario, format!("{}: {e}", path.display())))?;
            seeds
                .iter()
                .map(|&seed| {
                    let data = match c.sample_rows {
                        Some(count) => full
                            .sample_rows(count, seed)
                            .map_err(|e| data_err(scenario, e))?,
                        None => full.clone(),
                    };
                    let parts = split(&data, per_row, seed);
                    let test = (per_row > 0).then_some(parts.test);
                    Ok(Prepared {
                        train: parts.train,
                        test,
                    })
                })
                .collect()
        }
    }
}

fn stats(
    runs: &[RunSummary],
    f: impl Fn(&RunSummary) -> Option<f64>,
) -> (Option<f64>, Option<f64>) {
    let values: Vec<f64> = runs.iter().filter_map(f).collect();
    mean_std(&values)
}

fn aggregate(runs: &[RunSummary]) -> (Stats, Stats) {
    let cost = stats(runs, |r| Some(r.final_cost));
    let mse = stats(runs, |r| Some(r.final_mse));
    let rel = stats(runs, |r| Some(r.final_rel_residual));
    let test = stats(runs, |r| r.final_test_metric);
    let epochs = stats(runs, |r| Some(r.epochs as f64));
    (
        Stats {
            cost: cost.0,
            mse: mse.0,
            rel_residual: rel.0,
            test_metric: test.0,
            epochs: epochs.0,
        },
        Stats {
            cost: cost.1,
            mse: mse.1,
            rel_residual: rel.1,
            test_metric: test.1,
            epochs: epochs.1,
        },
    )
}

fn deviation(scenario: &Scenario, scale: Scale) -> Option<String> {
    if scale != Scale::Desk {
        return None;
    }
    let dims = |d: &DataSource| match d {
        DataSource::Generate(g) => format!("{}x{}", g.n, g.m),
        DataSource::Csv(c) => match c.sample_rows {
            Some(k) => format!("{k} sampled rows of {}", c.path.display()),
            None => format!("all rows of {}", c.path.display()),
        },
    };
    scenario.paper_data.as_ref().map(|full| {
        format!(
            "desk-scale data ({}) stands in for the full-scale instance ({})",
            dims(&scenario.data),
            dims(full)
        )
    })
}

/// Runs every (repeat, solver) pair and writes
/// `<out_dir>/<scenario>/<label>/repeat-<k>.csv` plus `summary.json`.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<Artifacts, BenchError> {
    let mut scenario = scenario.clone();
    if let Some(r) = options.repeats {
        scenario.repeats = r;
    }
    if let Some(s) = options.seed {
        scenario.seed = s;
    }
    let report = scenario.validate(options.scale)?;
    let seeds: Vec<u64> = (0..scenario.repeats as u64)
        .map(|k| scenario.seed + k)
        .collect();
    let prepared = prepare(&scenario, options, &seeds)?;
    let dir = options.out_dir.join(&scenario.name);
    let metric = scenario
        .evaluation
        .as_ref()
        .map(|e| e.metric)
        .unwrap_or(TestMetric::Mse);

    let tasks: Vec<(usize, usize)> = (0..scenario.repeats)
        .flat_map(|k| (0..scenario.solvers.len()).map(move |s| (k, s)))
        .collect();
    let execute = |&(k, s): &(usize, usize)| -> Result<RunSummary, BenchError> {
        let entry = &scenario.solvers[s];
        let data = &prepared[k];
        let config = entry.config.clone().with_seed(seeds[k]);
        let solver_err = |source: scaledsgd::SolverError| BenchError::Solver {
            scenario: scenario.name.clone(),
            label: entry.label.clone(),
            repeat: k,
            source: Box::new(source),
        };
        let started = Instant::now();
        let eval = data.test.as_ref().map(|test| Evaluation { test, metric });
        let outcome = Solver::with_random_init(config, &data.train, report.rank)
            .and_then(|solver| solver.run(eval.as_ref(), &mut NullSink))
            .map_err(solver_err)?;
        let seconds = started.elapsed().as_secs_f64();
        let rel = format!("{}/repeat-{k}.csv", entry.label);
        write_trace(&dir.join(&rel), &outcome.trace, options.timing)?;
        let last = outcome
            .final_record()
            .expect("trace holds the initial record");
        Ok(RunSummary {
            repeat: k,
            seed: seeds[k],
            epochs: last.iteration,
            verdict: outcome.verdict,
            diverged: outcome.diverged,
            rollbacks: outcome.rollbacks,
            initial_cost: outcome.initial_cost,
            initial_step: outcome.initial_step,
            final_cost: last.cost,
            final_mse: last.mse,
            final_rel_residual: last.rel_residual,
            final_test_metric: last.test_metric,
            trace: rel,
            seconds: options.timing.then_some(seconds),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config {
            path: "--jobs".into(),
            message: e.to_string(),
        })?;
    let results: Vec<Result<RunSummary, BenchError>> =
        pool.install(|| tasks.par_iter().map(execute).collect());
    let mut results = results.into_iter();

    // Tasks are ordered repeat-major; regroup per solver.
    let mut per_solver: Vec<Vec<RunSummary>> = vec![Vec::new(); scenario.solvers.len()];
    for &(_, s) in &tasks {
        per_solver[s].push(results.next().expect("one result per task")?);
    }
    let solvers = scenario
        .solvers
        .iter()
        .zip(per_solver)
        .map(|(entry, runs)| {
            let (mean, stddev) = aggregate(&runs);
            SolverSummary {
                label: entry.label.clone(),
                engine: entry.config.kind.name().to_string(),
                runs,
                mean,
                stddev,
            }
        })
        .collect();
    let first = &prepared[0].train;
    let summary = Summary {
        scenario: scenario.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scale: options.scale,
        deviation: deviation(&scenario, options.scale),
        seed: scenario.seed,
        repeats: scenario.repeats,
        rank: report.rank,
        data: DataSummary {
            n: first.n(),
            m: first.m(),
            known_entries: prepared.iter().map(|p| p.train.len()).collect(),
            test_entries: prepared
                .iter()
                .map(|p| p.test.as_ref().map_or(0, |t| t.len()))
                .collect(),
        },
        solvers,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    std::fs::write(dir.join("scenario.toml"), scenario.to_toml()).map_err(|source| {
        BenchError::Io {
            path: dir.join("scenario.toml"),
            source,
        }
    })?;
    Ok(Artifacts { dir, summary })
}
