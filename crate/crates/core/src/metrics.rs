//! Training loss, stopping rules, and held-out metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::ObservedMatrix;
use crate::solvers::FactorPair;

/// Default thresholds of the stopping rule.
pub const MSE_TOL: f64 = 1e-8;
pub const REL_RESIDUAL_TOL: f64 = 1e-4;
pub const MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("observed values are all zero (or there are none); relative residual is undefined")]
    ZeroData,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("rating spread must be positive")]
    InvalidSpread,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// `1/2 ||P_Omega(L R^T) - P_Omega(X*)||_F^2`
    pub cost: f64,
    /// `2 cost / |Omega|`
    pub mse: f64,
    /// `sqrt(2 cost) / ||P_Omega(X*)||_F`
    pub rel_residual: f64,
}

/// Squared-error loss over the observed entries, `O(|Omega| r)`.
pub fn squared_loss(factors: &FactorPair, data: &ObservedMatrix) -> f64 {
    0.5 * data
        .entries()
        .iter()
        .map(|e| {
            let d = factors.predict(e.i, e.j) - e.value;
            d * d
        })
        .sum::<f64>()
}

pub fn train_cost(factors: &FactorPair, data: &ObservedMatrix) -> Result<CostReport, MetricError> {
    let norm = data.value_norm();
    if data.is_empty() || norm == 0.0 {
        return Err(MetricError::ZeroData);
    }
    let cost = squared_loss(factors, data);
    Ok(CostReport {
        cost,
        mse: 2.0 * cost / data.len() as f64,
        rel_residual: (2.0 * cost).sqrt() / norm,
    })
}

/// Mean absolute error on `test` divided by `rating_spread`. Predictions
/// are not clipped.
pub fn nmae(
    factors: &FactorPair,
    test: &ObservedMatrix,
    rating_spread: f64,
) -> Result<f64, MetricError> {
    if test.is_empty() {
        return Err(MetricError::EmptyTestSet);
    }
    if !(rating_spread > 0.0) {
        return Err(MetricError::InvalidSpread);
    }
    let mae = test
        .entries()
        .iter()
        .map(|e| (factors.predict(e.i, e.j) - e.value).abs())
        .sum::<f64>()
        / test.len() as f64;
    Ok(mae / rating_spread)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Continue,
    MseReached,
    ResidualReached,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub mse_tol: f64,
    pub rel_residual_tol: f64,
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            mse_tol: MSE_TOL,
            rel_residual_tol: REL_RESIDUAL_TOL,
            max_iters: MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopState {
    pub mse: f64,
    pub rel_residual: f64,
    pub iters_done: usize,
    pub verdict: Verdict,
}

impl StopRule {
    /// Thresholds are strict; the iteration budget stops the run once
    /// `max_iters` iterations have completed.
    pub fn verdict(&self, mse: f64, rel_residual: f64, iters_done: usize) -> Verdict {
        if mse < self.mse_tol {
            Verdict::MseReached
        } else if rel_residual < self.rel_residual_tol {
            Verdict::ResidualReached
        } else if iters_done >= self.max_iters {
            Verdict::MaxIters
        } else {
            Verdict::Continue
        }
    }

    pub fn state(&self, mse: f64, rel_residual: f64, iters_done: usize) -> StopState {
        StopState {
            mse,
            rel_residual,
            iters_done,
            verdict: self.verdict(mse, rel_residual, iters_done),
        }
    }
}
