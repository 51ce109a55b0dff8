//! Single stochastic steps: the scaled update with its Gram-matrix
//! preconditioners, and the plain Euclidean update.

use crate::batching::{Batch, Side};
use crate::smalldense::{dot, gram, rank1_inv_update, spd_inverse, Cholesky, DenseMat, SpdMat};

use super::{FactorPair, SolverError};

/// `L^T L` and `R^T R`, maintained incrementally between exact refreshes.
///
/// When built with [`GramCache::with_inverses`] it also tracks both inverses
/// with Sherman-Morrison updates, which the single-entry fast path uses.
#[derive(Debug, Clone)]
pub struct GramCache {
    left: SpdMat,
    right: SpdMat,
    inverses: Option<(DenseMat, DenseMat)>,
    steps_since_refresh: usize,
}

impl GramCache {
    pub fn new(factors: &FactorPair) -> Self {
        Self {
            left: gram(factors.left()),
            right: gram(factors.right()),
            inverses: None,
            steps_since_refresh: 0,
        }
    }

    pub fn with_inverses(factors: &FactorPair) -> Result<Self, SolverError> {
        let mut cache = Self::new(factors);
        cache.inverses = Some(cache.fresh_inverses()?);
        Ok(cache)
    }

    fn fresh_inverses(&self) -> Result<(DenseMat, DenseMat), SolverError> {
        let l = spd_inverse(&self.left).map_err(|e| SolverError::dense("L^T L", e))?;
        let r = spd_inverse(&self.right).map_err(|e| SolverError::dense("R^T R", e))?;
        Ok((l, r))
    }

    pub fn left(&self) -> &SpdMat {
        &self.left
    }

    pub fn right(&self) -> &SpdMat {
        &self.right
    }

    pub fn inverses(&self) -> Option<(&DenseMat, &DenseMat)> {
        self.inverses.as_ref().map(|(l, r)| (l, r))
    }

    /// Incremental updates applied since the last exact recomputation.
    pub fn staleness(&self) -> usize {
        self.steps_since_refresh
    }

    /// Recomputes both Gram matrices (and inverses, if tracked) exactly.
    pub fn refresh(&mut self, factors: &FactorPair) -> Result<(), SolverError> {
        self.left = gram(factors.left());
        self.right = gram(factors.right());
        if self.inverses.is_some() {
            self.inverses = Some(self.fresh_inverses()?);
        }
        self.steps_since_refresh = 0;
        Ok(())
    }

    fn apply(&mut self, delta: &GramDelta) {
        let r = self.left.order();
        self.left = SpdMat::blend(1.0, &self.left, 1.0, &sym(&delta.left, r));
        self.right = SpdMat::blend(1.0, &self.right, 1.0, &sym(&delta.right, r));
        self.steps_since_refresh += 1;
    }
}

fn sym(m: &DenseMat, r: usize) -> SpdMat {
    SpdMat::try_from_dense(m.clone()).unwrap_or_else(|_| {
        let s = DenseMat::from_fn(r, r, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        SpdMat::try_from_dense(s).expect("symmetrized")
    })
}

/// Change applied to the cached Gram matrices by one step:
/// `new^T new - old^T old` for each factor's touched rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GramDelta {
    pub left: DenseMat,
    pub right: DenseMat,
}

fn gram_delta(old: &DenseMat, new: &DenseMat) -> DenseMat {
    let mut d = SpdMat::zeros(old.cols());
    d.apply_gram_delta(old, new);
    d.into_dense()
}

/// Unscaled partial derivatives `(S_b R_b, S_b^T L_b)` at the current factors.
pub fn batch_gradients(factors: &FactorPair, batch: &Batch) -> (DenseMat, DenseMat) {
    let lb = factors.left().gather_rows(batch.row_map());
    let rb = factors.right().gather_rows(batch.col_map());
    let res = batch.residual(&lb, &rb);
    (
        batch.residual_times_factor(&res, &rb, Side::Left),
        batch.residual_times_factor(&res, &lb, Side::Right),
    )
}

/// Weight of the global Gram term: `b mu / max(m, n)`.
pub fn global_weight(batch_len: usize, mu: f64, n: usize, m: usize) -> f64 {
    batch_len as f64 * mu / n.max(m) as f64
}

/// The two preconditioners `(P_R, P_L)` for a batch:
/// `P_R = w R^T R + (1 - mu) R_b^T R_b` and its mirror, with
/// `w = b mu / max(m, n)` for the actual batch length `b`.
pub fn preconditioners(
    factors: &FactorPair,
    cache: &GramCache,
    batch: &Batch,
    mu: f64,
) -> (SpdMat, SpdMat) {
    let w = global_weight(batch.len(), mu, factors.n(), factors.m());
    let lb = factors.left().gather_rows(batch.row_map());
    let rb = factors.right().gather_rows(batch.col_map());
    (
        SpdMat::blend(w, cache.right(), 1.0 - mu, &gram(&rb)),
        SpdMat::blend(w, cache.left(), 1.0 - mu, &gram(&lb)),
    )
}

/// Scaled descent directions for the batch rows, `(S_b R_b P_R^{-1}, S_b^T L_b P_L^{-1})`,
/// evaluated at the current factors.
pub fn scaled_directions(
    factors: &FactorPair,
    cache: &GramCache,
    batch: &Batch,
    mu: f64,
) -> Result<(DenseMat, DenseMat), SolverError> {
    let (grad_l, grad_r) = batch_gradients(factors, batch);
    let (p_right, p_left) = preconditioners(factors, cache, batch, mu);
    let context = |side: &'static str| {
        let rank = factors.rank();
        let (bl, br) = (batch.row_map().len(), batch.col_map().len());
        move |e| SolverError::NotPositiveDefinite {
            side,
            b_left: bl,
            b_right: br,
            rank,
            mu,
            source: e,
        }
    };
    let dir_l = Cholesky::factor(&p_right)
        .map_err(context("R"))?
        .solve_right(&grad_l);
    let dir_r = Cholesky::factor(&p_left)
        .map_err(context("L"))?
        .solve_right(&grad_r);
    Ok((dir_l, dir_r))
}

/// One scaled step on the batch rows:
///
/// ```text
/// L_b <- L_b - t (S_b R_b) P_R^{-1}
/// R_b <- R_b - t (S_b^T L_b) P_L^{-1}
/// ```
///
/// Both lines read the pre-step `S_b`, `L_b`, `R_b` and preconditioners.
/// Single-entry batches use the Sherman-Morrison path when the cache tracks
/// inverses and `mu > 0`. The cached Gram matrices are updated
/// incrementally and the applied delta is returned.
pub fn scaled_sgd_step(
    factors: &mut FactorPair,
    cache: &mut GramCache,
    batch: &Batch,
    step: f64,
    mu: f64,
) -> Result<GramDelta, SolverError> {
    let old_l = factors.left().gather_rows(batch.row_map());
    let old_r = factors.right().gather_rows(batch.col_map());

    let (dir_l, dir_r) = if batch.len() == 1 && mu > 0.0 && cache.inverses.is_some() {
        rank_one_directions(factors, cache, batch, mu)
    } else {
        scaled_directions(factors, cache, batch, mu)?
    };

    let mut new_l = old_l.clone();
    new_l.axpy(-step, &dir_l);
    let mut new_r = old_r.clone();
    new_r.axpy(-step, &dir_r);
    factors.left_mut().scatter_rows(batch.row_map(), &new_l);
    factors.right_mut().scatter_rows(batch.col_map(), &new_r);

    let delta = GramDelta {
        left: gram_delta(&old_l, &new_l),
        right: gram_delta(&old_r, &new_r),
    };
    cache.apply(&delta);
    if cache.inverses.is_some() {
        update_inverses(cache, &old_l, &new_l, &old_r, &new_r)?;
    }
    Ok(delta)
}

/// Single-entry batch: `P_R = w R^T R + (1 - mu) r r^T` is a rank-1
/// modification of a matrix whose inverse is tracked, so
/// `r P_R^{-1} = (r A^{-1}) / (1 + (1 - mu) r A^{-1} r^T)` with `A = w R^T R`
/// costs `O(r^2)`.
fn rank_one_directions(
    factors: &FactorPair,
    cache: &GramCache,
    batch: &Batch,
    mu: f64,
) -> (DenseMat, DenseMat) {
    let (inv_l, inv_r) = cache.inverses().expect("checked by caller");
    let e = batch.entries()[0];
    let l_row = factors.left().row(e.i);
    let r_row = factors.right().row(e.j);
    let s = dot(l_row, r_row) - e.value;
    let w = global_weight(1, mu, factors.n(), factors.m());
    let apply = |inv: &DenseMat, u: &[f64]| -> Vec<f64> {
        let a_inv_u: Vec<f64> = (0..u.len()).map(|k| dot(inv.row(k), u) / w).collect();
        let denom = 1.0 + (1.0 - mu) * dot(u, &a_inv_u);
        a_inv_u.into_iter().map(|v| s * v / denom).collect()
    };
    let r = factors.rank();
    (
        DenseMat::from_vec(1, r, apply(inv_r, r_row)),
        DenseMat::from_vec(1, r, apply(inv_l, l_row)),
    )
}

fn update_inverses(
    cache: &mut GramCache,
    old_l: &DenseMat,
    new_l: &DenseMat,
    old_r: &DenseMat,
    new_r: &DenseMat,
) -> Result<(), SolverError> {
    let (inv_l, inv_r) = cache.inverses.take().expect("checked by caller");
    let swap = |inv: DenseMat, old: &DenseMat, new: &DenseMat, current: &SpdMat, label| {
        let mut out = inv;
        for k in 0..new.rows() {
            match rank1_inv_update(&out, new.row(k), 1.0)
                .and_then(|m| rank1_inv_update(&m, old.row(k), -1.0))
            {
                Ok(m) => out = m,
                Err(_) => {
                    return spd_inverse(current).map_err(|e| SolverError::dense(label, e));
                }
            }
        }
        Ok(out)
    };
    let inv_l = swap(inv_l, old_l, new_l, &cache.left, "L^T L")?;
    let inv_r = swap(inv_r, old_r, new_r, &cache.right, "R^T R")?;
    cache.inverses = Some((inv_l, inv_r));
    Ok(())
}

/// Plain Euclidean step: `L_b <- L_b - t S_b R_b`, `R_b <- R_b - t S_b^T L_b`,
/// both from pre-step values.
pub fn sgd_step(factors: &mut FactorPair, batch: &Batch, step: f64) {
    let (grad_l, grad_r) = batch_gradients(factors, batch);
    let mut new_l = factors.left().gather_rows(batch.row_map());
    new_l.axpy(-step, &grad_l);
    let mut new_r = factors.right().gather_rows(batch.col_map());
    new_r.axpy(-step, &grad_r);
    factors.left_mut().scatter_rows(batch.row_map(), &new_l);
    factors.right_mut().scatter_rows(batch.col_map(), &new_r);
}
