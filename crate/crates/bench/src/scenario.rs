//! Scenario files: what data to build, which solvers to run, how often.
//!
//! Scenarios are TOML (or JSON, chosen by file extension or by sniffing a
//! leading `{`). The grammar is documented in the repository README.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scaledsgd::problem::GeneratorSpec;
use scaledsgd::solvers::{SolverConfig, TestMetric};

use crate::error::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Repeat `k` (0-based) uses seed `seed + k` for data, init and shuffling.
    #[serde(default = "defaults::one")]
    pub repeats: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Factorization rank; defaults to the generator's `r`.
    #[serde(default)]
    pub rank: Option<usize>,
    pub data: DataSource,
    /// Replacement data used with `--paper-scale`.
    #[serde(default)]
    pub paper_data: Option<DataSource>,
    #[serde(default)]
    pub evaluation: Option<EvaluationSpec>,
    pub solvers: Vec<SolverEntry>,
    /// Desk-scale wall-clock budget, informational.
    #[serde(default)]
    pub budget_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic low-rank matrix; the `seed` field is replaced per repeat.
    Generate(GeneratorSpec),
    Csv(CsvSource),
}

/// Triplet CSV (`i,j,value`, 0-based) such as a ratings dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    /// Entries with this value are dropped at load (e.g. a "not rated" 99).
    #[serde(default)]
    pub skip_value: Option<f64>,
    /// Keep this many uniformly chosen rows per repeat.
    #[serde(default)]
    pub sample_rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    pub metric: TestMetric,
    /// Generated data: this many unobserved cells of the ground truth.
    #[serde(default)]
    pub holdout: Option<usize>,
    /// CSV data: this many entries per row move to the test set.
    #[serde(default)]
    pub per_row_holdout: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    /// Unique within the scenario; names the trace files.
    pub label: String,
    pub config: SolverConfig,
}

mod defaults {
    pub fn one() -> usize {
        1
    }
    pub fn seed() -> u64 {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let json =
            path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        Self::parse(&text, json)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, BenchError> {
        if json {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| BenchError::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })
        } else {
            let de = toml::Deserializer::parse(text).map_err(|e| BenchError::Config {
                path: String::new(),
                message: e.to_string(),
            })?;
            serde_path_to_error::deserialize(de).map_err(|e| BenchError::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn data_for(&self, scale: Scale) -> &DataSource {
        match (scale, &self.paper_data) {
            (Scale::Paper, Some(d)) => d,
            _ => &self.data,
        }
    }

    pub fn rank_for(&self, scale: Scale) -> Option<usize> {
        self.rank.or(match self.data_for(scale) {
            DataSource::Generate(g) => Some(g.r),
            DataSource::Csv(_) => None,
        })
    }

    /// Static checks that need no data beyond the declared sizes.
    pub fn validate(&self, scale: Scale) -> Result<ValidationReport, BenchError> {
        let cfg = |path: String, message: String| BenchError::Config { path, message };
        if self.name.trim().is_empty() {
            return Err(cfg("name".into(), "must not be empty".into()));
        }
        if self.repeats == 0 {
            return Err(cfg("repeats".into(), "must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(cfg(
                "solvers".into(),
                "at least one solver is required".into(),
            ));
        }
        let data_field = if scale == Scale::Paper && self.paper_data.is_some() {
            "paper_data"
        } else {
            "data"
        };
        let rank = self.rank_for(scale).ok_or_else(|| {
            cfg(
                "rank".into(),
                "required when the data is not generated".into(),
            )
        })?;
        if rank == 0 {
            return Err(cfg("rank".into(), "must be at least 1".into()));
        }
        // Known-entry count bounds the batch size when it is static.
        let known = match self.data_for(scale) {
            DataSource::Generate(g) => {
                g.validate()
                    .map_err(|e| cfg(format!("{data_field}.generate"), e.to_string()))?;
                if rank > g.n.min(g.m) {
                    return Err(cfg(
                        "rank".into(),
                        format!("{rank} exceeds min(n, m) = {}", g.n.min(g.m)),
                    ));
                }
                let holdout = self
                    .evaluation
                    .as_ref()
                    .and_then(|e| e.holdout)
                    .unwrap_or(0);
                let count = g.sample_count();
                if count + holdout > g.n * g.m {
                    return Err(cfg(
                        "evaluation.holdout".into(),
                        format!(
                            "{holdout} held-out cells do not fit next to {count} known entries"
                        ),
                    ));
                }
                Some(count)
            }
            DataSource::Csv(c) => {
                if c.sample_rows == Some(0) {
                    return Err(cfg(
                        format!("{data_field}.csv.sample_rows"),
                        "must be at least 1".into(),
                    ));
                }
                None
            }
        };
        if let Some(ev) = &self.evaluation {
            if let TestMetric::Nmae { spread } = ev.metric {
                if !(spread > 0.0 && spread.is_finite()) {
                    return Err(cfg(
                        "evaluation.metric.spread".into(),
                        format!("must be positive, got {spread}"),
                    ));
                }
            }
            match self.data_for(scale) {
                DataSource::Generate(_) if ev.per_row_holdout.is_some() => {
                    return Err(cfg(
                        "evaluation.per_row_holdout".into(),
                        "applies to CSV data; use holdout for generated data".into(),
                    ))
                }
                DataSource::Csv(_) if ev.holdout.is_some() => {
                    return Err(cfg(
                        "evaluation.holdout".into(),
                        "applies to generated data; use per_row_holdout for CSV data".into(),
                    ))
                }
                _ => {}
            }
        }
        let mut labels = HashSet::new();
        let mut bindings = Vec::new();
        for (k, entry) in self.solvers.iter().enumerate() {
            if entry.label.is_empty()
                || !entry
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.+".contains(c))
            {
                return Err(cfg(
                    format!("solvers[{k}].label"),
                    format!(
                        "{:?} must be non-empty and use only [A-Za-z0-9-_.+]",
                        entry.label
                    ),
                ));
            }
            if !labels.insert(entry.label.as_str()) {
                return Err(cfg(
                    format!("solvers[{k}].label"),
                    format!("duplicate label {:?}", entry.label),
                ));
            }
            entry.config.validate(known).map_err(|e| {
                let message = match e {
                    scaledsgd::SolverError::InvalidConfig(m) => m,
                    other => other.to_string(),
                };
                cfg(format!("solvers[{k}].config"), message)
            })?;
            bindings.push(Binding {
                label: entry.label.clone(),
                engine: entry.config.kind.name().to_string(),
            });
        }
        Ok(ValidationReport {
            scenario: self.name.clone(),
            scale,
            rank,
            known_entries: known,
            repeats: self.repeats,
            bindings,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binding {
    pub label: String,
    pub engine: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub scale: Scale,
    pub rank: usize,
    pub known_entries: Option<usize>,
    pub repeats: usize,
    pub bindings: Vec<Binding>,
}
