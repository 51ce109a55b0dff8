#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use scaledsgd::problem::{generate, GeneratorSpec, ObservedMatrix};
use scaledsgd::rng::{SeedStreams, Stream};
use scaledsgd::smalldense::DenseMat;
use scaledsgd::solvers::{init_factors, FactorPair, InitStrategy};

pub fn to_na(m: &DenseMat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMat {
    DenseMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMat {
    DenseMat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded data plus a balanced random start.
pub fn instance(
    n: usize,
    m: usize,
    r: usize,
    os: f64,
    seed: u64,
) -> (ObservedMatrix, FactorPair, FactorPair) {
    let (data, truth) = generate(&GeneratorSpec::new(n, m, r, os).with_seed(seed)).unwrap();
    let mut init_rng = SeedStreams::new(seed).rng(Stream::Init);
    let init = init_factors(n, m, r, InitStrategy::Balanced, &mut init_rng);
    (data, truth, init)
}

/// A gauge with condition number around 1e2.
pub fn random_gauge(rng: &mut ChaCha8Rng, r: usize) -> DenseMat {
    let g = gaussian(rng, r, r);
    DenseMat::from_fn(r, r, |i, j| {
        if i == j {
            3.0 + g[(i, j)] * 0.2
        } else {
            g[(i, j)] * 0.4
        }
    })
}
