//! Small dense linear algebra for `r x r` and thin `k x r` matrices.
//!
//! Everything the solvers need from a dense kernel lives here: products,
//! Gram matrices, Cholesky-based SPD solves, and Sherman-Morrison rank-1
//! inverse updates. Matrices are row-major and small (the rank `r` is
//! typically below 50), so there is no blocking or SIMD.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Symmetry tolerance (relative) used when wrapping a dense matrix as SPD.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Denominators of a Sherman-Morrison update below this magnitude are rejected.
pub const SINGULAR_UPDATE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("matrix is not positive definite (non-positive pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("matrix is singular (zero pivot at column {column})")]
    Singular { column: usize },
    #[error("rank-1 inverse update is singular (denominator {denominator:e})")]
    SingularUpdate { denominator: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {rows}x{cols}",
            data.len()
        );
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Copies the listed rows into a new `indices.len() x cols` matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Writes the rows of `block` back to positions `indices`.
    pub fn scatter_rows(&mut self, indices: &[usize], block: &DenseMat) {
        assert_eq!(indices.len(), block.rows);
        assert_eq!(self.cols, block.cols);
        for (k, &i) in indices.iter().enumerate() {
            self.row_mut(i).copy_from_slice(block.row(k));
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMat) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &DenseMat) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        Self::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j)))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMat) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sub(&self, other: &DenseMat) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `||self - other||_F / ||other||_F`, or the absolute norm when `other` is zero.
    pub fn relative_distance(&self, other: &DenseMat) -> f64 {
        let diff = self.sub(other).frobenius_norm();
        let base = other.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }

    /// Solves `X * self = B` for a general square `self` by Gaussian
    /// elimination with partial pivoting. Used for gauge matrices, which are
    /// not symmetric.
    pub fn solve_right_general(&self, b: &DenseMat) -> Result<DenseMat, DenseError> {
        let n = self.rows;
        if self.cols != n || b.cols != n {
            return Err(DenseError::DimensionMismatch {
                expected: format!("square {n}x{n} and k x {n}"),
                found: format!("{}x{} and {}x{}", self.rows, self.cols, b.rows, b.cols),
            });
        }
        // X A = B  <=>  A^T X^T = B^T
        let mut a = self.transpose();
        let mut rhs = b.transpose();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
                .unwrap_or(col);
            let pivot = a[(pivot_row, col)];
            if pivot.abs() <= 1e-14 * scale {
                return Err(DenseError::Singular { column: col });
            }
            if pivot_row != col {
                swap_rows(&mut a, col, pivot_row);
                swap_rows(&mut rhs, col, pivot_row);
            }
            for i in col + 1..n {
                let f = a[(i, col)] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(i, j)] -= f * v;
                }
                for j in 0..rhs.cols {
                    let v = rhs[(col, j)];
                    rhs[(i, j)] -= f * v;
                }
            }
        }
        for col in (0..n).rev() {
            for j in 0..rhs.cols {
                let mut s = rhs[(col, j)];
                for k in col + 1..n {
                    s -= a[(col, k)] * rhs[(k, j)];
                }
                rhs[(col, j)] = s / a[(col, col)];
            }
        }
        Ok(rhs.transpose())
    }
}

fn swap_rows(m: &mut DenseMat, a: usize, b: usize) {
    for j in 0..m.cols {
        m.data.swap(a * m.cols + j, b * m.cols + j);
    }
}

impl Index<(usize, usize)> for DenseMat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Symmetric matrix intended for use as a preconditioner.
///
/// Positive definiteness is not checked at construction; it is established
/// (or refuted) by [`Cholesky::factor`].
#[derive(Clone, PartialEq, Debug)]
pub struct SpdMat(DenseMat);

impl SpdMat {
    pub fn zeros(order: usize) -> Self {
        Self(DenseMat::zeros(order, order))
    }

    pub fn identity(order: usize) -> Self {
        Self(DenseMat::identity(order))
    }

    /// Wraps a square matrix after checking symmetry to [`SYMMETRY_TOL`].
    pub fn try_from_dense(m: DenseMat) -> Result<Self, DenseError> {
        if m.rows != m.cols {
            return Err(DenseError::DimensionMismatch {
                expected: "square".into(),
                found: format!("{}x{}", m.rows, m.cols),
            });
        }
        let scale = m.max_abs();
        let mut asym: f64 = 0.0;
        for i in 0..m.rows {
            for j in i + 1..m.cols {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(DenseError::NotSymmetric { asymmetry: asym });
        }
        Ok(Self(m))
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.0.rows
    }

    #[inline]
    pub fn as_dense(&self) -> &DenseMat {
        &self.0
    }

    pub fn into_dense(self) -> DenseMat {
        self.0
    }

    /// `alpha * a + beta * b`; symmetric because both inputs are.
    pub fn blend(alpha: f64, a: &SpdMat, beta: f64, b: &SpdMat) -> SpdMat {
        assert_eq!(a.order(), b.order());
        let data =
            a.0.data
                .iter()
                .zip(&b.0.data)
                .map(|(x, y)| alpha * x + beta * y)
                .collect();
        SpdMat(DenseMat::from_vec(a.order(), a.order(), data))
    }

    /// Adds `new^T new - old^T old` in place (incremental Gram maintenance
    /// after a block of rows changes from `old` to `new`).
    pub fn apply_gram_delta(&mut self, old: &DenseMat, new: &DenseMat) {
        let r = self.order();
        assert_eq!(old.cols, r);
        assert_eq!(new.cols, r);
        let g = &mut self.0;
        for a in 0..r {
            for b in a..r {
                // Row-paired differences, so unchanged rows contribute exactly 0.
                let paired = new.rows.min(old.rows);
                let mut delta = 0.0;
                for k in 0..paired {
                    delta += new[(k, a)] * new[(k, b)] - old[(k, a)] * old[(k, b)];
                }
                for k in paired..new.rows {
                    delta += new[(k, a)] * new[(k, b)];
                }
                for k in paired..old.rows {
                    delta -= old[(k, a)] * old[(k, b)];
                }
                g[(a, b)] += delta;
                if a != b {
                    g[(b, a)] = g[(a, b)];
                }
            }
        }
    }

    /// Adds `alpha * u u^T` in place.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64]) {
        let r = self.order();
        assert_eq!(u.len(), r);
        for a in 0..r {
            for b in 0..r {
                self.0[(a, b)] += alpha * u[a] * u[b];
            }
        }
    }
}

/// `M^T M`, computed with the summation order of the textbook triple loop.
pub fn gram(m: &DenseMat) -> SpdMat {
    let r = m.cols;
    let mut g = DenseMat::zeros(r, r);
    for k in 0..m.rows {
        let row = m.row(k);
        for a in 0..r {
            let ra = row[a];
            for b in a..r {
                g[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..r {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    SpdMat(g)
}

/// Lower-triangular Cholesky factor `A = C C^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    factor: DenseMat,
}

impl Cholesky {
    pub fn factor(a: &SpdMat) -> Result<Self, DenseError> {
        let n = a.order();
        let src = a.as_dense();
        let mut c = DenseMat::zeros(n, n);
        for j in 0..n {
            let mut d = src[(j, j)];
            for k in 0..j {
                d -= c[(j, k)] * c[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(DenseError::NotPositiveDefinite {
                    column: j,
                    pivot: d,
                });
            }
            let d = d.sqrt();
            c[(j, j)] = d;
            for i in j + 1..n {
                let mut s = src[(i, j)];
                for k in 0..j {
                    s -= c[(i, k)] * c[(j, k)];
                }
                c[(i, j)] = s / d;
            }
        }
        Ok(Self { factor: c })
    }

    pub fn order(&self) -> usize {
        self.factor.rows
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.order();
        let c = &self.factor;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= c[(i, k)] * x[k];
            }
            x[i] = s / c[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= c[(k, i)] * x[k];
            }
            x[i] = s / c[(i, i)];
        }
    }

    /// Solves `X A = B`; each row of `B` is multiplied by `A^{-1}` on the right.
    pub fn solve_right(&self, b: &DenseMat) -> DenseMat {
        assert_eq!(b.cols, self.order(), "right-hand side width mismatch");
        let mut x = b.clone();
        for i in 0..x.rows {
            // A symmetric: x_row A = b_row  <=>  A x_row^T = b_row^T
            self.solve_in_place(x.row_mut(i));
        }
        x
    }

    pub fn inverse(&self) -> DenseMat {
        let n = self.order();
        let mut inv = DenseMat::identity(n);
        for i in 0..n {
            self.solve_in_place(inv.row_mut(i));
        }
        // Symmetrize away the last-bit asymmetry from the two triangular sweeps.
        for a in 0..n {
            for b in a + 1..n {
                let v = 0.5 * (inv[(a, b)] + inv[(b, a)]);
                inv[(a, b)] = v;
                inv[(b, a)] = v;
            }
        }
        inv
    }
}

/// Returns `X` with `X A = B` for SPD `A`.
pub fn spd_solve(a: &SpdMat, b: &DenseMat) -> Result<DenseMat, DenseError> {
    if b.cols != a.order() {
        return Err(DenseError::DimensionMismatch {
            expected: format!("k x {}", a.order()),
            found: format!("{}x{}", b.rows, b.cols),
        });
    }
    Ok(Cholesky::factor(a)?.solve_right(b))
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub fn spd_inverse(a: &SpdMat) -> Result<DenseMat, DenseError> {
    Ok(Cholesky::factor(a)?.inverse())
}

/// Sherman-Morrison: given `ainv = A^{-1}`, returns `(A + alpha u u^T)^{-1}`.
pub fn rank1_inv_update(ainv: &DenseMat, u: &[f64], alpha: f64) -> Result<DenseMat, DenseError> {
    let r = ainv.rows;
    assert_eq!(ainv.cols, r);
    assert_eq!(u.len(), r);
    let w: Vec<f64> = (0..r).map(|i| dot(ainv.row(i), u)).collect();
    let denom = 1.0 + alpha * dot(u, &w);
    if denom.abs() < SINGULAR_UPDATE_TOL || !denom.is_finite() {
        return Err(DenseError::SingularUpdate { denominator: denom });
    }
    let coef = alpha / denom;
    let mut out = ainv.clone();
    for a in 0..r {
        for b in 0..r {
            out[(a, b)] -= coef * w[a] * w[b];
        }
    }
    Ok(out)
}

/// Orthonormal basis for the column span of a tall matrix (modified
/// Gram-Schmidt applied twice). Returns `None` if the columns are
/// numerically dependent.
pub fn orthonormalize_columns(m: &DenseMat) -> Option<DenseMat> {
    let (rows, cols) = m.shape();
    let mut cols_vec: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    for j in 0..cols {
        let original = norm(&cols_vec[j]);
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = cols_vec.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                for (x, q) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * q;
                }
            }
        }
        let nrm = norm(&cols_vec[j]);
        if !(nrm > 1e-12 * original.max(f64::MIN_POSITIVE)) {
            return None;
        }
        cols_vec[j].iter_mut().for_each(|x| *x /= nrm);
    }
    Some(DenseMat::from_fn(rows, cols, |i, j| cols_vec[j][i]))
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMat {
        DenseMat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, r: usize) -> SpdMat {
        let g = random_mat(rng, r, r);
        SpdMat::blend(1.0, &gram(&g), 1.0, &SpdMat::identity(r))
    }

    fn gram_oracle(m: &DenseMat) -> DenseMat {
        let (k, r) = m.shape();
        let mut g = DenseMat::zeros(r, r);
        for a in 0..r {
            for b in 0..r {
                let mut s = 0.0;
                for i in 0..k {
                    s += m[(i, a)] * m[(i, b)];
                }
                g[(a, b)] = s;
            }
        }
        g
    }

    /// Inverse by cofactor expansion, r <= 3.
    fn cofactor_inverse(a: &DenseMat) -> DenseMat {
        match a.rows() {
            1 => DenseMat::from_rows(&[[1.0 / a[(0, 0)]]]),
            2 => {
                let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
                DenseMat::from_rows(&[
                    [a[(1, 1)] / det, -a[(0, 1)] / det],
                    [-a[(1, 0)] / det, a[(0, 0)] / det],
                ])
            }
            3 => {
                let m = |i: usize, j: usize| a[(i, j)];
                let cof = DenseMat::from_fn(3, 3, |i, j| {
                    let r: Vec<usize> = (0..3).filter(|&x| x != i).collect();
                    let c: Vec<usize> = (0..3).filter(|&x| x != j).collect();
                    let minor = m(r[0], c[0]) * m(r[1], c[1]) - m(r[0], c[1]) * m(r[1], c[0]);
                    if (i + j) % 2 == 0 {
                        minor
                    } else {
                        -minor
                    }
                });
                let det: f64 = (0..3).map(|j| m(0, j) * cof[(0, j)]).sum();
                cof.transpose().scale(1.0 / det)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn gram_of_padded_identity() {
        let m = DenseMat::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(gram(&m).as_dense(), &DenseMat::identity(2));
    }

    #[test]
    fn gram_scalar() {
        let m = DenseMat::from_rows(&[[2.0]]);
        assert_eq!(gram(&m).as_dense(), &DenseMat::from_rows(&[[4.0]]));
    }

    #[test]
    fn gram_of_empty_is_zero() {
        let m = DenseMat::zeros(0, 3);
        assert_eq!(gram(&m).as_dense(), &DenseMat::zeros(3, 3));
    }

    #[test]
    fn gram_matches_triple_loop_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_mat(&mut rng, 5, 3);
        assert_eq!(gram(&m).as_dense(), &gram_oracle(&m));
        for k in 0..=8 {
            for r in 1..=8 {
                let m = random_mat(&mut rng, k, r);
                assert_eq!(gram(&m).as_dense(), &gram_oracle(&m), "k={k} r={r}");
            }
        }
    }

    #[test]
    fn spd_solve_identity_and_diagonal() {
        let b = DenseMat::from_rows(&[[1.5, -2.0, 3.0], [0.0, 4.0, 1.0]]);
        assert_eq!(spd_solve(&SpdMat::identity(3), &b).unwrap(), b);

        let a = SpdMat::try_from_dense(DenseMat::diag(&[2.0, 4.0])).unwrap();
        let x = spd_solve(&a, &DenseMat::from_rows(&[[2.0, 4.0]])).unwrap();
        assert!(x.relative_distance(&DenseMat::from_rows(&[[1.0, 1.0]])) < 1e-15);
    }

    #[test]
    fn spd_solve_matches_cofactor_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in 1..=3 {
            let a = random_spd(&mut rng, r);
            let b = random_mat(&mut rng, 4, r);
            let x = spd_solve(&a, &b).unwrap();
            let resid = x.matmul(a.as_dense()).relative_distance(&b);
            assert!(resid < 1e-10, "r={r} residual {resid}");
            let oracle = b.matmul(&cofactor_inverse(a.as_dense()));
            assert!(x.relative_distance(&oracle) < 1e-10);
        }
    }

    #[test]
    fn spd_solve_ill_conditioned() {
        // A = Q diag(1..1e-8) Q^T, condition number 1e8.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = 6;
        let q = orthonormalize_columns(&random_mat(&mut rng, r, r)).unwrap();
        let d: Vec<f64> = (0..r)
            .map(|i| 10f64.powf(-8.0 * i as f64 / (r - 1) as f64))
            .collect();
        let a = q.matmul(&DenseMat::diag(&d)).matmul_t(&q);
        let a = SpdMat::try_from_dense(DenseMat::from_fn(r, r, |i, j| {
            0.5 * (a[(i, j)] + a[(j, i)])
        }))
        .unwrap();
        // B = X0 A: the product X A is then evaluated without the
        // 1e8-fold cancellation a generic B would force on it.
        let x0 = random_mat(&mut rng, 3, r);
        let b = x0.matmul(a.as_dense());
        let x = spd_solve(&a, &b).unwrap();
        let resid = x.matmul(a.as_dense()).relative_distance(&b);
        assert!(resid < 1e-10, "residual {resid}");

        // Generic B: normwise backward error.
        let b = random_mat(&mut rng, 3, r);
        let x = spd_solve(&a, &b).unwrap();
        let backward = x.matmul(a.as_dense()).sub(&b).frobenius_norm()
            / (a.as_dense().frobenius_norm() * x.frobenius_norm());
        assert!(backward < 1e-10, "backward error {backward}");
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a = SpdMat::try_from_dense(DenseMat::diag(&[1.0, 0.0])).unwrap();
        let err = spd_solve(&a, &DenseMat::zeros(1, 2)).unwrap_err();
        assert!(matches!(
            err,
            DenseError::NotPositiveDefinite { column: 1, .. }
        ));
        let a = SpdMat::try_from_dense(DenseMat::diag(&[-1.0, 2.0])).unwrap();
        assert!(Cholesky::factor(&a).is_err());
    }

    #[test]
    fn try_from_dense_rejects_asymmetric() {
        let m = DenseMat::from_rows(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(
            SpdMat::try_from_dense(m),
            Err(DenseError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rank1_noop_and_scalar() {
        let i3 = DenseMat::identity(3);
        assert_eq!(rank1_inv_update(&i3, &[0.0; 3], 1.0).unwrap(), i3);
        let out = rank1_inv_update(&DenseMat::identity(1), &[1.0], 1.0).unwrap();
        assert_eq!(out, DenseMat::from_rows(&[[0.5]]));
    }

    #[test]
    fn rank1_matches_dense_reinversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for r in 1..=6 {
            let a = random_spd(&mut rng, r);
            let u: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let updated = rank1_inv_update(&spd_inverse(&a).unwrap(), &u, 1.0).unwrap();
            let mut a2 = a.clone();
            a2.add_outer(1.0, &u);
            let oracle = spd_inverse(&a2).unwrap();
            assert!(updated.relative_distance(&oracle) < 1e-10);
        }
    }

    #[test]
    fn rank1_rejects_singular() {
        // (1 - u u^T) with |u| = 1 is singular.
        let err = rank1_inv_update(&DenseMat::identity(1), &[1.0], -1.0).unwrap_err();
        assert!(matches!(err, DenseError::SingularUpdate { .. }));
    }

    #[test]
    fn rank1_composed_matches_fresh_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for r in [1, 4, 10] {
            let mut acc = SpdMat::identity(r);
            let mut inv = DenseMat::identity(r);
            for _ in 0..100 {
                let u: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
                inv = rank1_inv_update(&inv, &u, 1.0).unwrap();
                acc.add_outer(1.0, &u);
            }
            let fresh = spd_inverse(&acc).unwrap();
            assert!(inv.relative_distance(&fresh) < 1e-8, "r={r}");
        }
    }

    #[test]
    fn gram_delta_tracks_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m = random_mat(&mut rng, 10, 3);
        let mut g = gram(&m);
        let idx = [1usize, 4, 7];
        let old = m.gather_rows(&idx);
        let new = random_mat(&mut rng, 3, 3);
        m.scatter_rows(&idx, &new);
        g.apply_gram_delta(&old, &new);
        assert!(g.as_dense().relative_distance(gram(&m).as_dense()) < 1e-14);
    }

    #[test]
    fn orthonormalize_produces_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = orthonormalize_columns(&random_mat(&mut rng, 20, 5)).unwrap();
        assert!(
            gram(&q)
                .as_dense()
                .relative_distance(&DenseMat::identity(5))
                < 1e-13
        );
        let dependent = DenseMat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(orthonormalize_columns(&dependent).is_none());
    }

    #[test]
    fn general_solve_right() {
        let m = DenseMat::from_rows(&[[0.0, 2.0], [3.0, 1.0]]);
        let b = DenseMat::from_rows(&[[1.0, 2.0], [5.0, -1.0]]);
        let x = m.solve_right_general(&b).unwrap();
        assert!(x.matmul(&m).relative_distance(&b) < 1e-14);
        let singular = DenseMat::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(singular.solve_right_general(&b).is_err());
    }
}
