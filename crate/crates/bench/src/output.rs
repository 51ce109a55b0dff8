//! Trace CSVs and summary JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use scaledsgd::solvers::TraceRecord;

use crate::error::BenchError;

pub const TRACE_HEADER: [&str; 7] = [
    "iteration",
    "cost",
    "mse",
    "rel_residual",
    "test_metric",
    "stepsize",
    "seconds",
];

#[derive(Serialize)]
struct Row {
    iteration: usize,
    cost: f64,
    mse: f64,
    rel_residual: f64,
    test_metric: Option<f64>,
    stepsize: Option<f64>,
    seconds: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one trace. Floats use the shortest representation that parses
/// back to the same value. `seconds` stays empty unless `timing` is set,
/// which keeps reruns byte-identical.
pub fn write_trace(path: &Path, trace: &[TraceRecord], timing: bool) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| BenchError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        w.serialize(Row {
            iteration: r.iteration,
            cost: r.cost,
            mse: r.mse,
            rel_residual: r.rel_residual,
            test_metric: r.test_metric,
            stepsize: r.stepsize,
            seconds: timing.then_some(r.seconds),
        })
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("summary serializes");
    text.push('\n');
    let mut f = File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Mean and sample standard deviation (`n - 1` denominator) of the finite values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (None, None);
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    if finite.len() < 2 {
        return (Some(mean), None);
    }
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}
