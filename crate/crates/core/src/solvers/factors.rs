use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::smalldense::{dot, DenseMat};

use super::SolverError;

/// The factorization `X = L R^T` with `L` of size `n x r` and `R` of size `m x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    left: DenseMat,
    right: DenseMat,
}

impl FactorPair {
    pub fn new(left: DenseMat, right: DenseMat) -> Self {
        assert_eq!(left.cols(), right.cols(), "factor ranks differ");
        Self { left, right }
    }

    pub fn left(&self) -> &DenseMat {
        &self.left
    }

    pub fn right(&self) -> &DenseMat {
        &self.right
    }

    pub fn left_mut(&mut self) -> &mut DenseMat {
        &mut self.left
    }

    pub fn right_mut(&mut self) -> &mut DenseMat {
        &mut self.right
    }

    pub fn into_parts(self) -> (DenseMat, DenseMat) {
        (self.left, self.right)
    }

    pub fn rank(&self) -> usize {
        self.left.cols()
    }

    pub fn n(&self) -> usize {
        self.left.rows()
    }

    pub fn m(&self) -> usize {
        self.right.rows()
    }

    #[inline]
    pub fn predict(&self, i: usize, j: usize) -> f64 {
        dot(self.left.row(i), self.right.row(j))
    }

    /// Dense `L R^T`; only for small matrices and tests.
    pub fn reconstruct(&self) -> DenseMat {
        self.left.matmul_t(&self.right)
    }

    pub fn is_finite(&self) -> bool {
        self.left.is_finite() && self.right.is_finite()
    }

    /// `(L, R) -> (L M^{-1}, R M^T)`, which leaves `L R^T` unchanged.
    pub fn gauge_transform(&self, gauge: &DenseMat) -> Result<FactorPair, SolverError> {
        let r = self.rank();
        if gauge.shape() != (r, r) {
            return Err(SolverError::SingularGauge(format!(
                "gauge must be {r}x{r}, got {}x{}",
                gauge.rows(),
                gauge.cols()
            )));
        }
        let left = gauge
            .solve_right_general(&self.left)
            .map_err(|e| SolverError::SingularGauge(e.to_string()))?;
        let right = self.right.matmul(&gauge.transpose());
        Ok(FactorPair { left, right })
    }

    /// Rescales `L` by `alpha` and `R` by `1/alpha` so that
    /// `||L||_F = ratio * ||R||_F`.
    pub fn rebalance(&mut self, ratio: f64) {
        let (nl, nr) = (self.left.frobenius_norm(), self.right.frobenius_norm());
        if nl == 0.0 || nr == 0.0 {
            return;
        }
        let alpha = (ratio * nr / nl).sqrt();
        self.left.scale_in_place(alpha);
        self.right.scale_in_place(1.0 / alpha);
    }
}

/// How starting factors are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Gaussian entries with standard deviation `1/sqrt(r)`, no rebalancing.
    Gaussian,
    /// Gaussian, then `||L||_F = ||R||_F`.
    #[default]
    Balanced,
    /// Gaussian, then `||L||_F = ratio * ||R||_F`.
    Unbalanced { ratio: f64 },
}

pub fn init_factors(
    n: usize,
    m: usize,
    r: usize,
    strategy: InitStrategy,
    rng: &mut Rng,
) -> FactorPair {
    let normal = Normal::new(0.0, 1.0 / (r as f64).sqrt()).expect("finite standard deviation");
    let left = DenseMat::from_fn(n, r, |_, _| normal.sample(rng));
    let right = DenseMat::from_fn(m, r, |_, _| normal.sample(rng));
    let mut pair = FactorPair::new(left, right);
    match strategy {
        InitStrategy::Gaussian => {}
        InitStrategy::Balanced => pair.rebalance(1.0),
        InitStrategy::Unbalanced { ratio } => pair.rebalance(ratio),
    }
    pair
}
