//! Stepsize schedules and the linearized initial stepsize.

use serde::{Deserialize, Serialize};

use crate::batching::Batch;
use crate::problem::ObservedMatrix;

use crate::smalldense::{dot, gram, Cholesky, DenseMat, SpdMat};

use super::step::{batch_gradients, global_weight};
use super::{FactorPair, SolverError};

pub const BOLD_DRIVER_UP: f64 = 1.10;
pub const BOLD_DRIVER_DOWN: f64 = 0.50;
pub const DEFAULT_DECAY_RATE: f64 = 0.95;

/// Halve the stepsize if the cost rose, otherwise grow it by 10%.
/// A tie counts as a non-increase.
pub fn bold_driver(step: f64, cost_prev: f64, cost_new: f64) -> f64 {
    bold_driver_with(step, cost_prev, cost_new, BOLD_DRIVER_UP, BOLD_DRIVER_DOWN)
}

fn bold_driver_with(step: f64, cost_prev: f64, cost_new: f64, up: f64, down: f64) -> f64 {
    // A non-finite cost is treated as an increase.
    if !(cost_new <= cost_prev) {
        down * step
    } else {
        up * step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    BoldDriver {
        #[serde(default = "default_up")]
        up: f64,
        #[serde(default = "default_down")]
        down: f64,
    },
    /// `t_k = t_0 rate^k`.
    ExponentialDecay {
        #[serde(default = "default_rate")]
        rate: f64,
    },
    Fixed,
}

fn default_up() -> f64 {
    BOLD_DRIVER_UP
}
fn default_down() -> f64 {
    BOLD_DRIVER_DOWN
}
fn default_rate() -> f64 {
    DEFAULT_DECAY_RATE
}

impl Default for Schedule {
    fn default() -> Self {
        Self::BoldDriver {
            up: BOLD_DRIVER_UP,
            down: BOLD_DRIVER_DOWN,
        }
    }
}

impl Schedule {
    /// Stepsize for the next epoch after `epochs_done` epochs.
    pub fn next(
        &self,
        step: f64,
        initial: f64,
        epochs_done: usize,
        cost_prev: f64,
        cost_new: f64,
    ) -> f64 {
        match *self {
            Schedule::BoldDriver { up, down } => {
                bold_driver_with(step, cost_prev, cost_new, up, down)
            }
            Schedule::ExponentialDecay { rate } => initial * rate.powi(epochs_done as i32),
            Schedule::Fixed => step,
        }
    }
}

/// Descent direction used by [`initial_stepsize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Direction {
    /// Full gradient scaled by the expected preconditioners of a
    /// `batch_size`-entry step.
    Scaled { mu: f64, batch_size: usize },
    /// Plain negative gradient.
    Euclidean,
}

/// Minimizer of the linearized cost along the first full-data descent
/// direction `D = (D_L, D_R)`:
///
/// ```text
/// t0 = argmin_t 1/2 || S - t P_Omega(D_L R^T + L D_R^T) ||_F^2
/// ```
///
/// where `S = P_Omega(L R^T - X*)`.
///
/// One epoch moves the factors by roughly `t` times the sum of the batch
/// directions. For plain SGD that sum is the full gradient. For the scaled
/// step each batch gradient is divided by its own preconditioner, so the
/// full gradient here is scaled by the preconditioner of a `b`-entry batch
/// in expectation:
///
/// ```text
/// E[P_R] = (b mu / max(m, n)) R^T R + (1 - mu) sum_j pi_j R_j R_j^T
/// ```
///
/// with `pi_j` the probability that column `j` lands in a batch of `b`
/// entries drawn without replacement. At `b = |Omega|` this is exactly the
/// full-batch preconditioner. Both terms transform like `R^T R` under a
/// gauge change, so `t0` is gauge-invariant.
pub fn initial_stepsize(
    factors: &FactorPair,
    data: &ObservedMatrix,
    direction: Direction,
) -> Result<f64, SolverError> {
    let batch = Batch::build(data.entries());
    let (grad_l, grad_r) = batch_gradients(factors, &batch);
    let (dir_l, dir_r) = match direction {
        Direction::Scaled { mu, batch_size } => {
            let (p_right, p_left) = expected_preconditioners(factors, data, &batch, mu, batch_size);
            let rank = factors.rank();
            let fail = |side: &'static str| {
                move |e| SolverError::NotPositiveDefinite {
                    side,
                    b_left: batch_size,
                    b_right: batch_size,
                    rank,
                    mu,
                    source: e,
                }
            };
            (
                Cholesky::factor(&p_right)
                    .map_err(fail("R"))?
                    .solve_right(&grad_l),
                Cholesky::factor(&p_left)
                    .map_err(fail("L"))?
                    .solve_right(&grad_r),
            )
        }
        Direction::Euclidean => (grad_l, grad_r),
    };
    // The move is -t (dir_l, dir_r); its first-order effect on entry (i, j)
    // is -t (<dL_i, R_j> + <L_i, dR_j>).
    let mut num = 0.0;
    let mut den = 0.0;
    for e in data.entries() {
        let li = batch.local_row(e.i).expect("row in batch");
        let lj = batch.local_col(e.j).expect("column in batch");
        let s = factors.predict(e.i, e.j) - e.value;
        let change = dot(dir_l.row(li), factors.right().row(e.j))
            + dot(factors.left().row(e.i), dir_r.row(lj));
        num += s * change;
        den += change * change;
    }
    if den < 1e-30 || !(num > 0.0) {
        return Err(SolverError::DegenerateDirection { denominator: den });
    }
    Ok(num / den)
}

/// `(E[P_R], E[P_L])` over batches of `b` entries, in full-batch local order.
fn expected_preconditioners(
    factors: &FactorPair,
    data: &ObservedMatrix,
    batch: &Batch,
    mu: f64,
    b: usize,
) -> (SpdMat, SpdMat) {
    let total = data.len();
    let b = b.clamp(1, total.max(1));
    let w = global_weight(b, mu, factors.n(), factors.m());
    let mut row_counts = vec![0usize; batch.row_map().len()];
    let mut col_counts = vec![0usize; batch.col_map().len()];
    for e in data.entries() {
        row_counts[batch.local_row(e.i).expect("row in batch")] += 1;
        col_counts[batch.local_col(e.j).expect("column in batch")] += 1;
    }
    let local = |map: &[usize], counts: &[usize], factor: &DenseMat| {
        let mut acc = SpdMat::zeros(factor.cols());
        for (&idx, &c) in map.iter().zip(counts) {
            acc.add_outer(inclusion_probability(total, c, b), factor.row(idx));
        }
        acc
    };
    let local_r = local(batch.col_map(), &col_counts, factors.right());
    let local_l = local(batch.row_map(), &row_counts, factors.left());
    (
        SpdMat::blend(w, &gram(factors.right()), 1.0 - mu, &local_r),
        SpdMat::blend(w, &gram(factors.left()), 1.0 - mu, &local_l),
    )
}

/// Probability that a row with `count` of the `total` entries appears in a
/// uniform `b`-subset: `1 - prod_{k<b} (total - count - k) / (total - k)`.
fn inclusion_probability(total: usize, count: usize, b: usize) -> f64 {
    let mut miss = 1.0;
    for k in 0..b {
        if count + k >= total {
            return 1.0;
        }
        miss *= (total - count - k) as f64 / (total - k) as f64;
        // Below this, 1 - miss rounds to 1.
        if miss < 1e-17 {
            return 1.0;
        }
    }
    1.0 - miss
}
