//! Scaled SGD, plain SGD, ALS and CCD++ on the factorization `X = L R^T`.
//!
//! The scaled update preconditions the batch partial derivatives with a
//! `mu`-blend of the global Gram matrices (`L^T L`, `R^T R`) and their
//! batch-local counterparts. Its steepest-descent interpretation is a
//! metric that depends on both the full factors and the current batch; the
//! blend itself is all the code needs, so that metric has no separate type.
//! Because the preconditioners transform like the factors under
//! `(L, R) -> (L M^{-1}, R M^T)`, the iterates commute with that map.

mod baselines;
mod config;
mod factors;
mod run;
mod schedule;
mod step;

use std::io;

use thiserror::Error;

use crate::metrics::MetricError;
use crate::smalldense::DenseError;

pub use baselines::{
    als_row_solve, als_sweep, ccdpp_sweep, regularized_cost, scalar_refit, EntryIndex,
};
pub use config::{AutoStep, GramRefresh, InitialStep, SolverConfig, SolverKind};
pub use factors::{init_factors, FactorPair, InitStrategy};
pub use run::{
    solve, Evaluation, NullSink, RunOutcome, Solver, TestMetric, TraceRecord, TraceSink,
    MAX_ROLLBACKS,
};
pub use schedule::{
    bold_driver, initial_stepsize, Direction, Schedule, BOLD_DRIVER_DOWN, BOLD_DRIVER_UP,
};
pub use step::{
    batch_gradients, global_weight, preconditioners, scaled_directions, scaled_sgd_step, sgd_step,
    GramCache, GramDelta,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "{side}-side preconditioner is not positive definite (b_L = {b_left}, b_R = {b_right}, r = {rank}, mu = {mu}): \
         {source}; with b_L < r or b_R < r use a nonzero mu"
    )]
    NotPositiveDefinite {
        side: &'static str,
        b_left: usize,
        b_right: usize,
        rank: usize,
        mu: f64,
        source: DenseError,
    },
    #[error("{context}: {source}")]
    Dense {
        context: &'static str,
        source: DenseError,
    },
    #[error(
        "{side} row {row} has {observations} observations but rank is {rank}; add regularization"
    )]
    UnderdeterminedRow {
        side: &'static str,
        row: usize,
        observations: usize,
        rank: usize,
    },
    #[error("gauge matrix is not invertible: {0}")]
    SingularGauge(String),
    #[error("initial direction is degenerate (denominator {denominator:e})")]
    DegenerateDirection { denominator: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("trace sink failed: {0}")]
    Sink(io::Error),
}

impl SolverError {
    pub(crate) fn dense(context: &'static str, source: DenseError) -> Self {
        SolverError::Dense { context, source }
    }
}
