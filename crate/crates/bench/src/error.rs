use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("unknown scenario {0:?} (not a file and not a built-in name)")]
    UnknownScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario {scenario}: {message}")]
    Data { scenario: String, message: String },
    #[error("scenario {scenario}, solver {label}, repeat {repeat}: {source}")]
    Solver {
        scenario: String,
        label: String,
        repeat: usize,
        #[source]
        source: Box<scaledsgd::SolverError>,
    },
}

impl BenchError {
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Config { .. } | BenchError::UnknownScenario(_) => "config",
            BenchError::Io { .. } => "io",
            BenchError::Data { .. } => "data",
            BenchError::Solver { .. } => "solver",
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            BenchError::Config { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            _ => 1,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let Some(p) = self.path() {
            err["path"] = json!(p);
        }
        if let BenchError::Solver {
            scenario,
            label,
            repeat,
            ..
        } = self
        {
            err["scenario"] = json!(scenario);
            err["solver"] = json!(label);
            err["repeat"] = json!(repeat);
        }
        json!({ "error": err }).to_string()
    }
}
