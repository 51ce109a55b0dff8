//! Alternating least squares and CCD++ baselines.
//!
//! Both minimize `1/2 ||P_Omega(L R^T - X*)||_F^2 + lambda/2 (||L||_F^2 + ||R||_F^2)`
//! exactly over one block at a time, so neither needs a stepsize.

use rand::seq::SliceRandom;

use crate::metrics::squared_loss;
use crate::problem::ObservedMatrix;
use crate::rng::Rng;
use crate::smalldense::{dot, Cholesky, DenseMat, SpdMat};

use super::{FactorPair, SolverError};

/// Entry indices grouped by row and by column, built once per run.
#[derive(Debug, Clone)]
pub struct EntryIndex {
    pub by_row: Vec<Vec<usize>>,
    pub by_col: Vec<Vec<usize>>,
}

impl EntryIndex {
    pub fn new(data: &ObservedMatrix) -> Self {
        Self {
            by_row: data.by_row(),
            by_col: data.by_col(),
        }
    }
}

/// Training cost plus `lambda/2 (||L||_F^2 + ||R||_F^2)`.
pub fn regularized_cost(factors: &FactorPair, data: &ObservedMatrix, lambda: f64) -> f64 {
    let base = squared_loss(factors, data);
    if lambda == 0.0 {
        return base;
    }
    let nl = factors.left().frobenius_norm();
    let nr = factors.right().frobenius_norm();
    base + 0.5 * lambda * (nl * nl + nr * nr)
}

/// Solves `(sum_j f_j f_j^T + lambda I) x = sum_j x_j f_j` for one row, where
/// `f_j` ranges over the fixed factor's rows paired with the row's entries.
pub fn als_row_solve(
    data: &ObservedMatrix,
    entries: &[usize],
    fixed: &DenseMat,
    use_col: bool,
    lambda: f64,
) -> Result<Vec<f64>, crate::smalldense::DenseError> {
    let r = fixed.cols();
    let mut normal = SpdMat::zeros(r);
    let mut rhs = vec![0.0; r];
    for &k in entries {
        let e = data.entries()[k];
        let f = fixed.row(if use_col { e.j } else { e.i });
        normal.add_outer(1.0, f);
        for (acc, v) in rhs.iter_mut().zip(f) {
            *acc += e.value * v;
        }
    }
    if lambda > 0.0 {
        normal = SpdMat::blend(1.0, &normal, lambda, &SpdMat::identity(r));
    }
    let chol = Cholesky::factor(&normal)?;
    chol.solve_in_place(&mut rhs);
    Ok(rhs)
}

/// One ALS sweep: every row of `L` in closed form given `R`, then every row
/// of `R` given the updated `L`. Rows are visited in a shuffled order.
pub fn als_sweep(
    factors: &mut FactorPair,
    data: &ObservedMatrix,
    index: &EntryIndex,
    lambda: f64,
    rng: &mut Rng,
) -> Result<(), SolverError> {
    let r = factors.rank();
    let check = |count: usize, side: &'static str, row: usize| {
        if lambda == 0.0 && count < r {
            Err(SolverError::UnderdeterminedRow {
                side,
                row,
                observations: count,
                rank: r,
            })
        } else {
            Ok(())
        }
    };

    let mut order: Vec<usize> = (0..factors.n()).collect();
    order.shuffle(rng);
    for &i in &order {
        check(index.by_row[i].len(), "L", i)?;
        let x = als_row_solve(data, &index.by_row[i], factors.right(), true, lambda)
            .map_err(|e| SolverError::dense("ALS row system", e))?;
        factors.left_mut().row_mut(i).copy_from_slice(&x);
    }

    let mut order: Vec<usize> = (0..factors.m()).collect();
    order.shuffle(rng);
    for &j in &order {
        check(index.by_col[j].len(), "R", j)?;
        let x = als_row_solve(data, &index.by_col[j], factors.left(), false, lambda)
            .map_err(|e| SolverError::dense("ALS column system", e))?;
        factors.right_mut().row_mut(j).copy_from_slice(&x);
    }
    Ok(())
}

/// One CCD++ sweep: for each rank-1 component `k`, add it back into the
/// residual, refit `(u, v) = (L[:, k], R[:, k])` with `inner_iters` rounds of
/// exact scalar coordinate minimization, and subtract the refit component.
///
/// Each scalar update is
/// `u_i = sum_j res_ij v_j / (lambda + sum_j v_j^2)` over the row's entries
/// (and symmetrically for `v_j`); a zero denominator leaves the coordinate
/// unchanged. The residual is kept on `Omega` only, so a sweep costs
/// `O(|Omega| r T)`.
pub fn ccdpp_sweep(
    factors: &mut FactorPair,
    data: &ObservedMatrix,
    index: &EntryIndex,
    inner_iters: usize,
    lambda: f64,
) -> Result<(), SolverError> {
    if inner_iters == 0 {
        return Err(SolverError::InvalidConfig(
            "CCD++ needs at least one inner iteration".into(),
        ));
    }
    let entries = data.entries();
    // res = X* - L R^T on Omega
    let mut res: Vec<f64> = entries
        .iter()
        .map(|e| e.value - factors.predict(e.i, e.j))
        .collect();

    for k in 0..factors.rank() {
        let mut u = factors.left().column(k);
        let mut v = factors.right().column(k);
        for (res_e, e) in res.iter_mut().zip(entries) {
            *res_e += u[e.i] * v[e.j];
        }
        for _ in 0..inner_iters {
            coordinate_pass(&mut u, &v, &index.by_row, &res, entries, lambda, |e| {
                (e.i, e.j)
            });
            coordinate_pass(&mut v, &u, &index.by_col, &res, entries, lambda, |e| {
                (e.j, e.i)
            });
        }
        for (res_e, e) in res.iter_mut().zip(entries) {
            *res_e -= u[e.i] * v[e.j];
        }
        for (i, &val) in u.iter().enumerate() {
            factors.left_mut()[(i, k)] = val;
        }
        for (j, &val) in v.iter().enumerate() {
            factors.right_mut()[(j, k)] = val;
        }
    }
    Ok(())
}

fn coordinate_pass(
    target: &mut [f64],
    other: &[f64],
    groups: &[Vec<usize>],
    res: &[f64],
    entries: &[crate::problem::Entry],
    lambda: f64,
    coords: impl Fn(&crate::problem::Entry) -> (usize, usize),
) {
    for (idx, group) in groups.iter().enumerate() {
        let mut num = 0.0;
        let mut den = lambda;
        for &k in group {
            let (_, o) = coords(&entries[k]);
            num += res[k] * other[o];
            den += other[o] * other[o];
        }
        if den > 0.0 {
            target[idx] = num / den;
        }
    }
}

/// Closed-form value of one coordinate given its neighbours; exposed for tests.
pub fn scalar_refit(values: &[f64], partners: &[f64], lambda: f64) -> Option<f64> {
    let den = lambda + dot(partners, partners);
    (den > 0.0).then(|| dot(values, partners) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate, Entry, GeneratorSpec};
    use crate::rng::{SeedStreams, Stream};
    use crate::solvers::{init_factors, InitStrategy};

    fn seeded(
        n: usize,
        m: usize,
        r: usize,
        os: f64,
        seed: u64,
    ) -> (ObservedMatrix, FactorPair, FactorPair) {
        let (data, truth) = generate(&GeneratorSpec::new(n, m, r, os).with_seed(seed)).unwrap();
        let mut rng = SeedStreams::new(seed).rng(Stream::Init);
        let init = init_factors(n, m, r, InitStrategy::Balanced, &mut rng);
        (data, truth, init)
    }

    #[test]
    fn als_recovers_left_from_true_right() {
        let (n, m, r) = (15, 12, 3);
        let os = (n * m) as f64 / ((n + m - r) * r) as f64;
        let (data, truth, _) = seeded(n, m, r, os, 1);
        assert_eq!(data.len(), n * m);
        let index = EntryIndex::new(&data);
        let mut f = FactorPair::new(DenseMat::zeros(n, r), truth.right().clone());
        // Only the L half of the sweep is under test; inspect L before R moves.
        for i in 0..n {
            let x = als_row_solve(&data, &index.by_row[i], f.right(), true, 0.0).unwrap();
            f.left_mut().row_mut(i).copy_from_slice(&x);
        }
        assert!(f.left().relative_distance(truth.left()) < 1e-10);
        let mut rng = SeedStreams::new(1).rng(Stream::RowOrder);
        als_sweep(&mut f, &data, &index, 0.0, &mut rng).unwrap();
        assert!(f.reconstruct().relative_distance(&truth.reconstruct()) < 1e-10);
    }

    #[test]
    fn als_empty_row_with_ridge_is_zero() {
        let data =
            ObservedMatrix::new(2, 2, vec![Entry::new(0, 0, 1.0), Entry::new(0, 1, 2.0)]).unwrap();
        let index = EntryIndex::new(&data);
        let mut f = FactorPair::new(
            DenseMat::from_rows(&[[1.0], [5.0]]),
            DenseMat::from_rows(&[[1.0], [1.0]]),
        );
        let mut rng = SeedStreams::new(0).rng(Stream::RowOrder);
        als_sweep(&mut f, &data, &index, 0.5, &mut rng).unwrap();
        assert_eq!(f.left().row(1), &[0.0]);
    }

    #[test]
    fn als_underdetermined_without_ridge() {
        let data = ObservedMatrix::new(
            2,
            3,
            vec![
                Entry::new(0, 0, 1.0),
                Entry::new(1, 1, 2.0),
                Entry::new(1, 2, 2.0),
            ],
        )
        .unwrap();
        let index = EntryIndex::new(&data);
        let mut f = FactorPair::new(
            DenseMat::from_fn(2, 2, |i, j| (i + j + 1) as f64),
            DenseMat::from_fn(3, 2, |i, j| (2 * i + j + 1) as f64),
        );
        let mut rng = SeedStreams::new(0).rng(Stream::RowOrder);
        assert!(matches!(
            als_sweep(&mut f, &data, &index, 0.0, &mut rng),
            Err(SolverError::UnderdeterminedRow {
                side: "L",
                row: 0,
                ..
            })
        ));
    }

    #[test]
    fn als_rows_match_normal_equations() {
        let (data, _, f) = seeded(30, 30, 3, 3.0, 5);
        let index = EntryIndex::new(&data);
        for (i, group) in index.by_row.iter().enumerate() {
            let got = als_row_solve(&data, group, f.right(), true, 0.0).unwrap();
            // Brute force: explicit sums, then Gaussian elimination.
            let mut a = DenseMat::zeros(3, 3);
            let mut b = DenseMat::zeros(1, 3);
            for &k in group {
                let e = data.entries()[k];
                for p in 0..3 {
                    b[(0, p)] += e.value * f.right()[(e.j, p)];
                    for q in 0..3 {
                        a[(p, q)] += f.right()[(e.j, p)] * f.right()[(e.j, q)];
                    }
                }
            }
            let x = a.solve_right_general(&b).unwrap();
            let got = DenseMat::from_vec(1, 3, got);
            assert!(got.relative_distance(&x) < 1e-10, "row {i}");
        }
    }

    #[test]
    fn ccdpp_fits_rank_one_data() {
        let (data, _, mut f) = seeded(10, 8, 1, 3.0, 9);
        let index = EntryIndex::new(&data);
        let start = squared_loss(&f, &data);
        let mut costs = vec![start];
        for _ in 0..40 {
            ccdpp_sweep(&mut f, &data, &index, 5, 0.0).unwrap();
            costs.push(squared_loss(&f, &data));
        }
        assert!(*costs.last().unwrap() <= 1e-16, "{costs:?}");
    }

    #[test]
    fn ccdpp_single_coordinate_closed_form() {
        // One entry x = 3, lambda = 0.5. Starting from (u, v) = (2, 1) the u-update
        // returns 3 * 1 / (0.5 + 1) = 2, so u is frozen and v = x u / (lambda + u^2).
        let data = ObservedMatrix::new(1, 1, vec![Entry::new(0, 0, 3.0)]).unwrap();
        let index = EntryIndex::new(&data);
        let mut f = FactorPair::new(DenseMat::from_rows(&[[2.0]]), DenseMat::from_rows(&[[1.0]]));
        ccdpp_sweep(&mut f, &data, &index, 1, 0.5).unwrap();
        assert_eq!(f.left()[(0, 0)], 2.0);
        assert!((f.right()[(0, 0)] - 3.0 * 2.0 / (0.5 + 4.0)).abs() < 1e-15);
        assert_eq!(scalar_refit(&[3.0], &[2.0], 0.5), Some(6.0 / 4.5));

        // Zero partner and no ridge: the coordinate stays put.
        assert_eq!(scalar_refit(&[3.0], &[0.0], 0.0), None);
        let mut z = FactorPair::new(DenseMat::from_rows(&[[0.0]]), DenseMat::from_rows(&[[0.0]]));
        ccdpp_sweep(&mut z, &data, &index, 1, 0.0).unwrap();
        assert_eq!(z.left()[(0, 0)], 0.0);
        assert!(ccdpp_sweep(&mut z, &data, &index, 0, 0.0).is_err());
    }

    #[test]
    fn ccdpp_inner_updates_are_monotone() {
        let (data, _, f0) = seeded(25, 20, 3, 3.0, 4);
        let index = EntryIndex::new(&data);
        let mut f = f0;
        let mut prev = squared_loss(&f, &data);
        for _ in 0..10 {
            for t in 1..=5 {
                let mut g = f.clone();
                ccdpp_sweep(&mut g, &data, &index, t, 0.0).unwrap();
                let c = squared_loss(&g, &data);
                assert!(c <= prev);
            }
            ccdpp_sweep(&mut f, &data, &index, 5, 0.0).unwrap();
            let c = squared_loss(&f, &data);
            assert!(c <= prev, "{c} > {prev}");
            prev = c;
        }
    }
}
