//! Nonnegative-factorisation belief compressions.
//!
//! Three algorithms share this module:
//!
//! * P-NMF minimises `1/2 ||B - F F^T B||_F^2 + (lambda/2) ||F F^T||_F^2`
//!   by a multiplicative gradient rule ([`pnmf_factorize`]).
//! * O-NMF minimises `||B - F Btilde||_F^2 + lambda ||I - F F^T||_F^2`
//!   by alternating multiplicative updates ([`onmf_factorize`]).
//! * LP-NMF minimises an unnormalised KL reconstruction loss plus a
//!   symmetric-KL locality risk over a neighbourhood graph
//!   ([`lpnmf_factorize`]).
//!
//! All three return a nonnegative basis; P-NMF and O-NMF guarantee a
//! non-increasing objective trace (a blending safeguard backs off any
//! multiplicative step that would overshoot).

mod lpnmf;
mod onmf;
mod pnmf;

pub use lpnmf::{
    compressed_columns, lpnmf_factorize, lpnmf_factorize_full, symmetric_kl, unnormalised_kl,
};
pub use onmf::onmf_factorize;
pub use pnmf::{
    pnmf_factorize, pnmf_factorize_auto, pnmf_gradient, pnmf_objective, pnmf_update_step,
};

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Denominator floor for multiplicative updates; entries below it are left
/// unchanged and counted in the trace.
pub const DIVISION_GUARD: f64 = 1e-300;

/// Epsilon floor inside KL logarithms and ratios.
pub const KL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NmfVariant {
    Onmf,
    Lpnmf,
    Pnmf,
}

/// Regularisation weight: fixed, or selected automatically (the O-NMF
/// fallback balances the two loss terms; the P-NMF grid targets a
/// contraction margin near 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfConfig {
    pub k: usize,
    pub lambda: LambdaChoice,
    pub max_iters: usize,
    /// Relative objective-decrease stopping threshold.
    pub tol: f64,
    pub seed: u64,
    pub variant: NmfVariant,
    /// Discount of the model being compressed; when known, the basis records
    /// `eta * ||F F^T||_inf` for the solver's contraction warning.
    pub discount: Option<f64>,
    /// LP-NMF: Euclidean subsampling threshold (applied by the caller).
    pub delta: f64,
    /// LP-NMF: KNN neighbour count for the locality graph.
    pub knn_k: usize,
    /// LP-NMF: locality risk weight mu.
    pub locality_weight: f64,
}

impl NmfConfig {
    pub fn pnmf(k: usize, seed: u64) -> Self {
        NmfConfig {
            k,
            lambda: LambdaChoice::Fixed(0.0),
            max_iters: 2000,
            tol: 1e-7,
            seed,
            variant: NmfVariant::Pnmf,
            discount: None,
            delta: 0.0,
            knn_k: 4,
            locality_weight: 0.1,
        }
    }

    pub fn onmf(k: usize, seed: u64) -> Self {
        NmfConfig {
            variant: NmfVariant::Onmf,
            lambda: LambdaChoice::Auto,
            ..Self::pnmf(k, seed)
        }
    }

    pub fn lpnmf(k: usize, seed: u64) -> Self {
        NmfConfig {
            variant: NmfVariant::Lpnmf,
            ..Self::pnmf(k, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("compressed dimension k must be >= 1".into()));
        }
        if let LambdaChoice::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.delta < 0.0 || self.locality_weight < 0.0 {
            return Err(Error::Config(
                "delta and locality weight must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopCause {
    Tol,
    MaxIters,
}

/// Objective history of one factorisation run.
#[derive(Debug, Clone, Serialize)]
pub struct FactorisationTrace {
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub stop: StopCause,
    /// Multiplicative-update entries skipped by the division guard.
    pub division_guards: usize,
}

/// Strictly positive i.i.d. uniform(0.1, 1.1) init so multiplicative updates
/// never divide by zero.
pub(crate) fn init_factor<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| 0.1 + rng.random::<f64>())
}

/// Checks that a data matrix is finite, nonnegative and not identically zero.
pub(crate) fn check_nonnegative_data(b: &DMatrix<f64>) -> Result<()> {
    let mut any_positive = false;
    for &v in b.iter() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Numerical(format!(
                "factorisation input must be finite and nonnegative, found {v}"
            )));
        }
        if v > 0.0 {
            any_positive = true;
        }
    }
    if !any_positive {
        return Err(Error::EmptyInput("all-zero factorisation input".into()));
    }
    Ok(())
}

/// Relative-decrease stopping test.
///
/// The objective is evaluated through Gram-matrix identities whose large-term
/// cancellation quantises the computed value near a plateau; a single flat
/// step is therefore not evidence of convergence. Stopping requires the
/// relative decrease to stay below `tol` for ten consecutive iterations.
pub(crate) struct ConvergenceTest {
    tol: f64,
    streak: usize,
}

impl ConvergenceTest {
    pub(crate) fn new(tol: f64) -> Self {
        ConvergenceTest { tol, streak: 0 }
    }

    pub(crate) fn update(&mut self, prev: f64, cur: f64) -> bool {
        let dec = prev - cur;
        if dec.abs() / prev.abs().max(1e-30) < self.tol {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= 10
    }
}
