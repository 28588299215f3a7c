//! Matrix helpers shared by the compression algorithms and the solver.
//!
//! Everything here is deliberately small: dense `nalgebra` matrices plus a
//! row-compressed sparse representation for the observation-weighted
//! transition maps, and an incrementally updated orthonormal basis used by
//! the Krylov iteration for dependence tests.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Induced infinity norm: maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..m.nrows() {
        let mut s = 0.0;
        for j in 0..m.ncols() {
            s += m[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Numerical-rank cutoff: `max(nrows, ncols) * eps * sigma_max`.
pub fn rank_tolerance(nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
    nrows.max(ncols) as f64 * f64::EPSILON * sigma_max
}

/// Numerical rank of a matrix under the standard SVD cutoff convention.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = rank_tolerance(m.nrows(), m.ncols(), sigma_max);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = rank_tolerance(m.nrows(), m.ncols(), sigma_max);
    svd.pseudo_inverse(tol)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))
}

/// Least-squares residual `min_w ||c - F w||_2`. An empty `F` gives `||c||_2`.
pub fn lstsq_residual(f: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    if f.ncols() == 0 {
        return c.norm();
    }
    let svd = f.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = rank_tolerance(f.nrows(), f.ncols(), sigma_max);
    match svd.solve(c, tol) {
        Ok(w) => (c - f * w).norm(),
        Err(_) => c.norm(),
    }
}

/// Fraction of non-zero entries.
pub fn density(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let nz = m.iter().filter(|&&v| v != 0.0).count();
    nz as f64 / (m.nrows() * m.ncols()) as f64
}

/// A matrix stored dense, or row-compressed when sparse enough.
///
/// Only the products the solver and the Krylov iteration need are provided:
/// `x^T M` (belief propagation) and `M v` (alpha-vector assembly, candidate
/// generation).
#[derive(Debug, Clone, PartialEq)]
pub enum MaybeSparse {
    Dense(DMatrix<f64>),
    Sparse {
        nrows: usize,
        ncols: usize,
        /// Per-row `(column, value)` pairs, column-sorted.
        rows: Vec<Vec<(u32, f64)>>,
    },
}

impl MaybeSparse {
    /// Stores `m` sparse when its density is below `threshold`.
    pub fn from_dense(m: DMatrix<f64>, threshold: f64) -> Self {
        if density(&m) < threshold {
            let rows = (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .filter(|&j| m[(i, j)] != 0.0)
                        .map(|j| (j as u32, m[(i, j)]))
                        .collect()
                })
                .collect();
            MaybeSparse::Sparse {
                nrows: m.nrows(),
                ncols: m.ncols(),
                rows,
            }
        } else {
            MaybeSparse::Dense(m)
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            MaybeSparse::Dense(m) => m.nrows(),
            MaybeSparse::Sparse { nrows, .. } => *nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            MaybeSparse::Dense(m) => m.ncols(),
            MaybeSparse::Sparse { ncols, .. } => *ncols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, MaybeSparse::Sparse { .. })
    }

    /// `x^T M` as a row vector.
    pub fn row_mul(&self, x: &RowDVector<f64>) -> RowDVector<f64> {
        match self {
            MaybeSparse::Dense(m) => x * m,
            MaybeSparse::Sparse { nrows, ncols, rows } => {
                debug_assert_eq!(x.ncols(), *nrows);
                let mut out = RowDVector::zeros(*ncols);
                for (i, row) in rows.iter().enumerate() {
                    let xi = x[i];
                    if xi == 0.0 {
                        continue;
                    }
                    for &(j, v) in row {
                        out[j as usize] += xi * v;
                    }
                }
                out
            }
        }
    }

    /// `M v` as a column vector.
    pub fn mat_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            MaybeSparse::Dense(m) => m * v,
            MaybeSparse::Sparse { nrows, rows, .. } => {
                let mut out = DVector::zeros(*nrows);
                for (i, row) in rows.iter().enumerate() {
                    let mut s = 0.0;
                    for &(j, val) in row {
                        s += val * v[j as usize];
                    }
                    out[i] = s;
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            MaybeSparse::Dense(m) => m.clone(),
            MaybeSparse::Sparse { nrows, ncols, rows } => {
                let mut m = DMatrix::zeros(*nrows, *ncols);
                for (i, row) in rows.iter().enumerate() {
                    for &(j, v) in row {
                        m[(i, j as usize)] = v;
                    }
                }
                m
            }
        }
    }
}

/// Incrementally maintained orthonormal basis of a growing column set.
///
/// Stores the accepted columns verbatim (they form the compression basis F)
/// together with a Gram-Schmidt Q/R factorisation used for least-squares
/// residuals and numerical-rank acceptance tests. Because only
/// rank-increasing columns are ever pushed, `rank(F)` always equals the
/// number of stored columns.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    n: usize,
    cols: Vec<DVector<f64>>,
    q: Vec<DVector<f64>>,
    /// Column j of the R factor: coefficients of cols[j] in the Q basis
    /// (length j) followed by the diagonal residual norm.
    r_cols: Vec<Vec<f64>>,
    sigma_max: f64,
    sigma_min: f64,
}

impl OrthoBasis {
    pub fn new(n: usize) -> Self {
        OrthoBasis {
            n,
            cols: Vec::new(),
            q: Vec::new(),
            r_cols: Vec::new(),
            sigma_max: 0.0,
            sigma_min: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The accepted columns as a dense matrix (empty => n x 0).
    pub fn matrix(&self) -> DMatrix<f64> {
        if self.cols.is_empty() {
            return DMatrix::zeros(self.n, 0);
        }
        DMatrix::from_fn(self.n, self.cols.len(), |i, j| self.cols[j][i])
    }

    /// Projects `y` onto the current span; returns the residual norm and the
    /// Q-basis coefficients. Uses two Gram-Schmidt passes for stability.
    pub fn project(&self, y: &DVector<f64>) -> (f64, Vec<f64>) {
        let mut t = y.clone();
        let mut coeffs = vec![0.0; self.q.len()];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let c = qi.dot(&t);
                coeffs[i] += c;
                t.axpy(-c, qi, 1.0);
            }
        }
        (t.norm(), coeffs)
    }

    /// Least-squares residual of `y` against the accepted columns.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        self.project(y).0
    }

    fn r_matrix(&self) -> DMatrix<f64> {
        let k = self.r_cols.len();
        let mut r = DMatrix::zeros(k, k);
        for (j, col) in self.r_cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                r[(i, j)] = v;
            }
        }
        r
    }

    fn refresh_spectrum(&mut self) {
        if self.r_cols.is_empty() {
            self.sigma_max = 0.0;
            self.sigma_min = 0.0;
            return;
        }
        let svd = self.r_matrix().svd(false, false);
        self.sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
        self.sigma_min = svd
            .singular_values
            .iter()
            .fold(f64::INFINITY, |a, &s| a.min(s));
    }

    /// As `rank_increases`, with an absolute singular-value cutoff instead
    /// of the adaptive convention.
    pub fn rank_increases_with(&self, y: &DVector<f64>, tol: Option<f64>) -> bool {
        let Some(t) = tol else {
            return self.rank_increases(y);
        };
        let (resid, coeffs) = self.project(y);
        if self.cols.is_empty() {
            return resid > t;
        }
        let k = self.cols.len();
        let rank_of = |m: &DMatrix<f64>| {
            m.clone()
                .svd(false, false)
                .singular_values
                .iter()
                .filter(|&&s| s > t)
                .count()
        };
        let r = self.r_matrix();
        let mut ext = DMatrix::zeros(k + 1, k + 1);
        ext.view_mut((0, 0), (k, k)).copy_from(&r);
        for (i, &c) in coeffs.iter().enumerate() {
            ext[(i, k)] = c;
        }
        ext[(k, k)] = resid;
        rank_of(&ext) > rank_of(&r)
    }

    /// Numerical-rank acceptance: does appending `y` increase the numerical
    /// rank of the column set?
    ///
    /// Fast paths cover the unambiguous regimes; the narrow gray zone falls
    /// back to an exact SVD of the (small) extended R factor.
    pub fn rank_increases(&self, y: &DVector<f64>) -> bool {
        let (resid, coeffs) = self.project(y);
        if self.cols.is_empty() {
            return resid > 0.0;
        }
        let k = self.cols.len();
        let tol_ext = rank_tolerance(self.n, k + 1, self.sigma_max.max(resid));
        // sigma_min([F,c]) <= resid, so a residual at or below the cutoff can
        // never lift the rank.
        if resid <= tol_ext {
            return false;
        }
        // Lower bound on sigma_min of the extended triangular factor:
        // 1 / ||M^{-1}|| with M = [[R, a], [0, r]].
        let a_norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        if self.sigma_min > 0.0 {
            let inv_bound = (1.0 + a_norm / resid) / self.sigma_min + 1.0 / resid;
            let sigma_min_lb = 1.0 / inv_bound;
            let sigma_max_ub = (self.sigma_max.powi(2) + a_norm * a_norm + resid * resid).sqrt();
            if sigma_min_lb > rank_tolerance(self.n, k + 1, sigma_max_ub) {
                return true;
            }
        }
        // Gray zone: exact singular values of [F, c] via the extended R.
        let mut ext = DMatrix::zeros(k + 1, k + 1);
        ext.view_mut((0, 0), (k, k)).copy_from(&self.r_matrix());
        for (i, &c) in coeffs.iter().enumerate() {
            ext[(i, k)] = c;
        }
        ext[(k, k)] = resid;
        let svd = ext.svd(false, false);
        let smax = svd.singular_values.iter().fold(0.0_f64, |a, &s| a.max(s));
        let tol = rank_tolerance(self.n, k + 1, smax);
        let rank_ext = svd.singular_values.iter().filter(|&&s| s > tol).count();
        rank_ext > k
    }

    /// Appends `y` as a new basis column. Returns false (and leaves the basis
    /// unchanged) when `y` has no component outside the current span.
    pub fn push(&mut self, y: DVector<f64>) -> bool {
        let (resid, coeffs) = self.project(&y);
        if resid <= 0.0 {
            return false;
        }
        let mut t = y.clone();
        for (qi, &c) in self.q.iter().zip(&coeffs) {
            t.axpy(-c, qi, 1.0);
        }
        // Re-project once more in case of heavy cancellation.
        for qi in &self.q {
            let c = qi.dot(&t);
            t.axpy(-c, qi, 1.0);
        }
        let norm = t.norm();
        if norm <= 0.0 {
            return false;
        }
        t /= norm;
        let mut r_col = coeffs;
        r_col.push(resid);
        self.q.push(t);
        self.r_cols.push(r_col);
        self.cols.push(y);
        self.refresh_spectrum();
        true
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
}
