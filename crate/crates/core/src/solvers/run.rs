//! Epoch orchestration: shuffling, batching, stepsize schedule, stopping,
//! and per-epoch telemetry.

use std::io;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::batching::Batch;
use crate::metrics::{nmae, train_cost, CostReport, Verdict};
use crate::problem::ObservedMatrix;
use crate::rng::{Rng, SeedStreams, Stream};

use super::baselines::{als_sweep, ccdpp_sweep, EntryIndex};
use super::schedule::{initial_stepsize, Direction, BOLD_DRIVER_DOWN};
use super::step::{scaled_sgd_step, sgd_step, GramCache};
use super::{
    init_factors, FactorPair, GramRefresh, InitialStep, SolverConfig, SolverError, SolverKind,
};

/// Telemetry for one completed iteration (one pass through the known
/// entries, or one full ALS/CCD++ sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cost: f64,
    pub mse: f64,
    pub rel_residual: f64,
    pub test_metric: Option<f64>,
    /// Stepsize used during the iteration; `None` for ALS and CCD++.
    pub stepsize: Option<f64>,
    /// Cumulative wall-clock seconds since the run started.
    pub seconds: f64,
}

pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> io::Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) -> io::Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards records.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) -> io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestMetric {
    Mse,
    RelResidual,
    Nmae { spread: f64 },
}

impl TestMetric {
    pub fn evaluate(
        &self,
        factors: &FactorPair,
        test: &ObservedMatrix,
    ) -> Result<f64, SolverError> {
        Ok(match *self {
            TestMetric::Mse => train_cost(factors, test)?.mse,
            TestMetric::RelResidual => train_cost(factors, test)?.rel_residual,
            TestMetric::Nmae { spread } => nmae(factors, test, spread)?,
        })
    }
}

/// Held-out data and the metric reported on it.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub test: &'a ObservedMatrix,
    pub metric: TestMetric,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    pub factors: FactorPair,
    pub verdict: Verdict,
    /// The cost became non-finite; the run was stopped early.
    pub diverged: bool,
    pub initial_cost: f64,
    pub initial_step: Option<f64>,
    /// Epochs undone by the divergence guard.
    pub rollbacks: usize,
}

impl RunOutcome {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.trace.last()
    }
}

enum Engine {
    Stochastic {
        cache: Option<GramCache>,
        shuffle: Rng,
    },
    Als {
        index: EntryIndex,
        rows: Rng,
    },
    Ccdpp {
        index: EntryIndex,
    },
}

/// A solver instance owning its factors for the duration of a run.
pub struct Solver<'a> {
    config: SolverConfig,
    data: &'a ObservedMatrix,
    factors: FactorPair,
    engine: Engine,
    step: f64,
    initial_step: f64,
    epochs_done: usize,
    last_cost: f64,
    elapsed: f64,
    rollbacks: usize,
    total_rollbacks: usize,
}

/// Consecutive rolled-back epochs before a run is declared diverged.
pub const MAX_ROLLBACKS: usize = 10;

impl<'a> Solver<'a> {
    /// Draws starting factors from the configured init strategy and seed.
    pub fn with_random_init(
        config: SolverConfig,
        data: &'a ObservedMatrix,
        rank: usize,
    ) -> Result<Self, SolverError> {
        let mut rng = SeedStreams::new(config.seed).rng(Stream::Init);
        let init = init_factors(data.n(), data.m(), rank, config.init, &mut rng);
        Self::new(config, data, init)
    }

    pub fn new(
        config: SolverConfig,
        data: &'a ObservedMatrix,
        init: FactorPair,
    ) -> Result<Self, SolverError> {
        config.validate(Some(data.len()))?;
        if init.n() != data.n() || init.m() != data.m() {
            return Err(SolverError::InvalidConfig(format!(
                "factors are {}x{} but data is {}x{}",
                init.n(),
                init.m(),
                data.n(),
                data.m()
            )));
        }
        let started = Instant::now();
        let streams = SeedStreams::new(config.seed);
        let engine = match config.kind {
            SolverKind::ScaledSgd => {
                let cache = if config.batch_size == 1 && config.rank1_fast_path && config.mu > 0.0 {
                    GramCache::with_inverses(&init)?
                } else {
                    GramCache::new(&init)
                };
                Engine::Stochastic {
                    cache: Some(cache),
                    shuffle: streams.rng(Stream::Shuffle),
                }
            }
            SolverKind::Sgd => Engine::Stochastic {
                cache: None,
                shuffle: streams.rng(Stream::Shuffle),
            },
            SolverKind::Als => Engine::Als {
                index: EntryIndex::new(data),
                rows: streams.rng(Stream::RowOrder),
            },
            SolverKind::Ccdpp => Engine::Ccdpp {
                index: EntryIndex::new(data),
            },
        };
        let initial_step = match (config.kind, config.initial_step) {
            (k, _) if !k.is_stochastic() => f64::NAN,
            (_, InitialStep::Value(t)) => t,
            (k, InitialStep::Auto(_)) => {
                let direction = if k == SolverKind::ScaledSgd {
                    Direction::Scaled {
                        mu: config.mu,
                        batch_size: config.batch_size,
                    }
                } else {
                    Direction::Euclidean
                };
                match initial_stepsize(&init, data, direction) {
                    Ok(t) => t,
                    Err(SolverError::DegenerateDirection { .. }) => config.fallback_step,
                    Err(e) => return Err(e),
                }
            }
        };
        let last_cost = train_cost(&init, data)?.cost;
        Ok(Self {
            step: initial_step,
            initial_step,
            config,
            data,
            factors: init,
            engine,
            epochs_done: 0,
            last_cost,
            elapsed: started.elapsed().as_secs_f64(),
            rollbacks: 0,
            total_rollbacks: 0,
        })
    }

    pub fn factors(&self) -> &FactorPair {
        &self.factors
    }

    pub fn into_factors(self) -> FactorPair {
        self.factors
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Stepsize the next epoch will use (NaN for ALS and CCD++).
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn gram_cache(&self) -> Option<&GramCache> {
        match &self.engine {
            Engine::Stochastic { cache, .. } => cache.as_ref(),
            _ => None,
        }
    }

    /// One pass: shuffle `Omega`, split into `ceil(|Omega| / b)` batches
    /// (the last may be short), and step on each with the stepsize held
    /// fixed; then record metrics and advance the schedule.
    ///
    /// With the divergence guard on, an epoch that ends non-finite (or hits
    /// an indefinite preconditioner with `mu > 0`) is undone and the stepsize
    /// halved; the record then reports the restored factors.
    pub fn epoch(&mut self, eval: Option<&Evaluation<'_>>) -> Result<TraceRecord, SolverError> {
        let started = Instant::now();
        let step_used = self.step;
        let guarded = self.config.divergence_guard && self.config.kind.is_stochastic();
        let snapshot = guarded.then(|| (self.factors.clone(), self.gram_cache().cloned()));
        let config = &self.config;
        let data = self.data;
        let factors = &mut self.factors;
        let outcome = match &mut self.engine {
            Engine::Stochastic { cache, shuffle } => {
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(shuffle);
                let mut buf = Vec::with_capacity(config.batch_size);
                let mut result = Ok(());
                for chunk in order.chunks(config.batch_size) {
                    buf.clear();
                    buf.extend(chunk.iter().map(|&k| data.entries()[k]));
                    let batch = Batch::build(&buf);
                    match cache {
                        Some(cache) => {
                            if let Err(e) =
                                scaled_sgd_step(factors, cache, &batch, step_used, config.mu)
                            {
                                result = Err(e);
                                break;
                            }
                            if config.gram_refresh == GramRefresh::EveryStep {
                                if let Err(e) = cache.refresh(factors) {
                                    result = Err(e);
                                    break;
                                }
                            }
                        }
                        None => sgd_step(factors, &batch, step_used),
                    }
                }
                if result.is_ok() {
                    if let Some(cache) = cache {
                        if factors.is_finite() {
                            result = cache.refresh(factors);
                        }
                    }
                }
                result
            }
            Engine::Als { index, rows } => {
                als_sweep(factors, data, index, config.regularization, rows)
            }
            Engine::Ccdpp { index } => ccdpp_sweep(
                factors,
                data,
                index,
                config.ccd_inner_iters,
                config.regularization,
            ),
        };
        // A step that fails because the iterates blew up is divergence, not a
        // configuration problem. With mu > 0 (or batches at least r wide) the
        // preconditioners are only indefinite after a numerical breakdown.
        let mut broke_down = false;
        if let Err(e) = outcome {
            let breakdown = match &e {
                SolverError::NotPositiveDefinite {
                    b_left,
                    b_right,
                    rank,
                    mu,
                    ..
                } => *mu > 0.0 || (*b_left >= *rank && *b_right >= *rank),
                _ => false,
            };
            if self.factors.is_finite() && !breakdown {
                return Err(e);
            }
            broke_down = true;
        }

        let blew_up = broke_down || !self.factors.is_finite();
        let mut rolled_back = false;
        if blew_up {
            if let Some((factors, cache)) = snapshot {
                if self.rollbacks < MAX_ROLLBACKS {
                    self.factors = factors;
                    if let Engine::Stochastic { cache: slot, .. } = &mut self.engine {
                        *slot = cache;
                    }
                    self.rollbacks += 1;
                    self.total_rollbacks += 1;
                    rolled_back = true;
                }
            }
        } else {
            self.rollbacks = 0;
        }
        let usable = rolled_back || !blew_up;
        let report = if usable {
            train_cost(&self.factors, self.data)?
        } else {
            CostReport {
                cost: f64::INFINITY,
                mse: f64::INFINITY,
                rel_residual: f64::INFINITY,
            }
        };
        let test_metric = match eval {
            Some(ev) if usable => Some(ev.metric.evaluate(&self.factors, ev.test)?),
            Some(_) => Some(f64::NAN),
            None => None,
        };
        self.epochs_done += 1;
        if rolled_back {
            self.step *= BOLD_DRIVER_DOWN;
        } else if self.config.kind.is_stochastic() {
            self.step = self.config.schedule.next(
                self.step,
                self.initial_step,
                self.epochs_done,
                self.last_cost,
                report.cost,
            );
        }
        self.last_cost = report.cost;
        self.elapsed += started.elapsed().as_secs_f64();
        Ok(TraceRecord {
            iteration: self.epochs_done,
            cost: report.cost,
            mse: report.mse,
            rel_residual: report.rel_residual,
            test_metric,
            stepsize: self.config.kind.is_stochastic().then_some(step_used),
            seconds: self.elapsed,
        })
    }

    /// Runs epochs until the stopping rule fires or the cost stops being finite.
    pub fn run(
        mut self,
        eval: Option<&Evaluation<'_>>,
        sink: &mut dyn TraceSink,
    ) -> Result<RunOutcome, SolverError> {
        let rule = self.config.stop_rule();
        let initial_cost = self.last_cost;
        let mut trace = Vec::new();
        let mut verdict = Verdict::Continue;
        let mut diverged = false;
        // A zero budget still reports the starting point's verdict.
        if rule.max_iters == 0 {
            verdict = Verdict::MaxIters;
        }
        while verdict == Verdict::Continue {
            let record = self.epoch(eval)?;
            sink.record(&record).map_err(SolverError::Sink)?;
            diverged = !record.cost.is_finite();
            verdict = rule.verdict(record.mse, record.rel_residual, record.iteration);
            trace.push(record);
            if diverged {
                break;
            }
        }
        if diverged && verdict == Verdict::Continue {
            verdict = Verdict::MaxIters;
        }
        let initial_step = self
            .config
            .kind
            .is_stochastic()
            .then_some(self.initial_step);
        Ok(RunOutcome {
            trace,
            factors: self.factors,
            verdict,
            diverged,
            initial_cost,
            initial_step,
            rollbacks: self.total_rollbacks,
        })
    }
}

/// Convenience: build a solver and run it to completion.
pub fn solve(
    config: SolverConfig,
    data: &ObservedMatrix,
    init: FactorPair,
    eval: Option<&Evaluation<'_>>,
    sink: &mut dyn TraceSink,
) -> Result<RunOutcome, SolverError> {
    Solver::new(config, data, init)?.run(eval, sink)
}
