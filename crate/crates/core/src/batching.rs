//! Per-step completion subproblems.
//!
//! A batch of `b` known entries touches `b_L` unique rows of `L` and `b_R`
//! unique columns (rows of `R`). The batch keeps the sorted unique index sets
//! and the local coordinates of every entry, so the residual and both partial
//! derivatives cost `O(b r)` without materializing a `b_L x b_R` matrix.

use crate::problem::Entry;
use crate::smalldense::{dot, DenseMat};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    entries: Vec<Entry>,
    row_map: Vec<usize>,
    col_map: Vec<usize>,
    omega: Vec<(usize, usize)>,
    // Entry positions sorted by (local row, local col) and (local col, local row);
    // the sparse products accumulate in these orders.
    by_row: Vec<usize>,
    by_col: Vec<usize>,
}

impl Batch {
    /// Sorts and deduplicates the touched rows and columns (`O(b log b)`)
    /// and records local coordinates in input order.
    pub fn build(entries: &[Entry]) -> Self {
        let mut row_map: Vec<usize> = entries.iter().map(|e| e.i).collect();
        row_map.sort_unstable();
        row_map.dedup();
        let mut col_map: Vec<usize> = entries.iter().map(|e| e.j).collect();
        col_map.sort_unstable();
        col_map.dedup();
        let omega = entries
            .iter()
            .map(|e| {
                let li = row_map
                    .binary_search(&e.i)
                    .expect("row present by construction");
                let lj = col_map
                    .binary_search(&e.j)
                    .expect("column present by construction");
                (li, lj)
            })
            .collect::<Vec<(usize, usize)>>();
        let mut by_row: Vec<usize> = (0..omega.len()).collect();
        by_row.sort_unstable_by_key(|&k| omega[k]);
        let mut by_col: Vec<usize> = (0..omega.len()).collect();
        by_col.sort_unstable_by_key(|&k| (omega[k].1, omega[k].0));
        Self {
            entries: entries.to_vec(),
            row_map,
            col_map,
            omega,
            by_row,
            by_col,
        }
    }

    /// Number of entries `b`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Sorted unique global row indices (`b_L` of them).
    pub fn row_map(&self) -> &[usize] {
        &self.row_map
    }

    /// Sorted unique global column indices (`b_R` of them).
    pub fn col_map(&self) -> &[usize] {
        &self.col_map
    }

    /// Local `(row, col)` coordinates, aligned with `entries()`.
    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega
    }

    pub fn local_row(&self, global: usize) -> Option<usize> {
        self.row_map.binary_search(&global).ok()
    }

    pub fn local_col(&self, global: usize) -> Option<usize> {
        self.col_map.binary_search(&global).ok()
    }

    /// `S_b = P_Omega_b(L_b R_b^T - X*_b)`, one value per batch entry.
    pub fn residual(&self, left_b: &DenseMat, right_b: &DenseMat) -> SparseResidual {
        debug_assert_eq!(left_b.rows(), self.row_map.len());
        debug_assert_eq!(right_b.rows(), self.col_map.len());
        SparseResidual(
            self.omega
                .iter()
                .zip(&self.entries)
                .map(|(&(li, lj), e)| dot(left_b.row(li), right_b.row(lj)) - e.value)
                .collect(),
        )
    }

    /// `S_b R_b` (for [`Side::Left`], `factor = R_b`) or `S_b^T L_b`
    /// (for [`Side::Right`], `factor = L_b`), touching only the `b` nonzeros.
    pub fn residual_times_factor(
        &self,
        res: &SparseResidual,
        factor: &DenseMat,
        side: Side,
    ) -> DenseMat {
        assert_eq!(res.len(), self.len());
        let r = factor.cols();
        let out_rows = match side {
            Side::Left => self.row_map.len(),
            Side::Right => self.col_map.len(),
        };
        let order = match side {
            Side::Left => &self.by_row,
            Side::Right => &self.by_col,
        };
        let mut out = DenseMat::zeros(out_rows, r);
        for &k in order {
            let s = res.values()[k];
            if s == 0.0 {
                continue;
            }
            let (li, lj) = self.omega[k];
            let (dst, src) = match side {
                Side::Left => (li, lj),
                Side::Right => (lj, li),
            };
            let src_row = factor.row(src);
            for (o, f) in out.row_mut(dst).iter_mut().zip(src_row) {
                *o += s * f;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Gradient with respect to `L_b`: `S_b R_b`.
    Left,
    /// Gradient with respect to `R_b`: `S_b^T L_b`.
    Right,
}

/// Residual values aligned with a batch's entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual(Vec<f64>);

impl SparseResidual {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&s| s == 0.0)
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }
}
