//! Compressed POMDP assembly and the compression-error / stability report.
//!
//! Given a basis F with decompression map F_dag, the reduced model is
//! `R~ = F_dag R`, `T~^{a,z} = F_dag T^{a,z} F`, and beliefs compress as
//! `b~ = F^T b`. Compressed beliefs are coordinates, not distributions: no
//! nonnegativity or normalisation is imposed, and none is applied while
//! propagating `b~^T T~^{a,z}` during solving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::pomdp::{Belief, ObsWeightedTransitions, Pomdp};
use crate::vdc::{compressed_products, map_times, CompressionBasis};

/// The reduced reward and transition maps plus the basis that produced them.
#[derive(Debug, Clone)]
pub struct CompressedPomdp {
    pub r_tilde: DMatrix<f64>,
    /// Per-(a, z) k x k maps, indexed `a * n_obs + z`.
    pub t_tilde: Vec<DMatrix<f64>>,
    pub basis: CompressionBasis,
    pub discount: f64,
    pub k: usize,
    pub n_actions: usize,
    pub n_obs: usize,
}

impl CompressedPomdp {
    pub fn map(&self, action: usize, obs: usize) -> &DMatrix<f64> {
        &self.t_tilde[action * self.n_obs + obs]
    }
}

/// Length-k coordinate vector of a compressed belief.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBelief(pub DVector<f64>);

impl CompressedBelief {
    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Compression-error and stability metrics.
///
/// `eps_r`/`eps_t` are induced infinity-norm residuals of the reward and
/// transition fits; `contraction_margin` below 1 makes the compressed
/// recursion a contraction; `value_loss_bound` is the value-loss bound
/// `(||I-A||_inf / (1 - eta ||A||_inf)) (||R||_inf + eta |Z| ||V*||_inf)`
/// with `A = F F_dag`, available only under contraction.
#[derive(Debug, Clone, Serialize)]
pub struct CompressionErrorReport {
    pub eps_r: f64,
    pub eps_t: f64,
    pub a_inf: f64,
    pub i_minus_a_inf: f64,
    pub contraction_margin: f64,
    pub value_loss_bound: Option<f64>,
    pub bound_unavailable_reason: Option<String>,
}

/// Assembles the compressed model by exact matrix products, without any
/// renormalisation.
pub fn build_compressed(
    model: &Pomdp,
    obs_w: &ObsWeightedTransitions,
    basis: &CompressionBasis,
) -> Result<CompressedPomdp> {
    if basis.n() != model.n_states {
        return Err(Error::Dim(format!(
            "basis has {} rows but the model has {} states",
            basis.n(),
            model.n_states
        )));
    }
    if basis.k() == 0 {
        return Err(Error::RankDeficient("basis has no columns".into()));
    }
    if basis.f_dag.nrows() != basis.k() || basis.f_dag.ncols() != basis.n() {
        return Err(Error::Dim(format!(
            "decompression map is {}x{}, expected {}x{}",
            basis.f_dag.nrows(),
            basis.f_dag.ncols(),
            basis.k(),
            basis.n()
        )));
    }
    let (r_tilde, t_tilde) = compressed_products(model, obs_w, &basis.f, &basis.f_dag);
    Ok(CompressedPomdp {
        r_tilde,
        t_tilde,
        basis: basis.clone(),
        discount: model.discount,
        k: basis.k(),
        n_actions: model.n_actions,
        n_obs: model.n_obs,
    })
}

/// `b~^T = b^T F`.
pub fn compress_belief(basis: &CompressionBasis, b: &Belief) -> Result<CompressedBelief> {
    if b.len() != basis.n() {
        return Err(Error::Dim(format!(
            "belief has {} states, basis expects {}",
            b.len(),
            basis.n()
        )));
    }
    Ok(CompressedBelief(basis.f.transpose() * b.probs()))
}

/// Default sup-norm estimate for the optimal value: `max |R| / (1 - eta)`.
pub fn default_value_sup_estimate(model: &Pomdp) -> f64 {
    model.max_abs_reward() / (1.0 - model.discount)
}

/// Computes every compression-error metric; `v_sup_estimate` defaults to
/// `max |R| / (1 - eta)` when not supplied.
pub fn error_report(
    model: &Pomdp,
    obs_w: &ObsWeightedTransitions,
    basis: &CompressionBasis,
    v_sup_estimate: Option<f64>,
) -> Result<CompressionErrorReport> {
    let compressed = build_compressed(model, obs_w, basis)?;
    let f = &basis.f;
    let eps_r = linalg::inf_norm(&(&model.reward - f * &compressed.r_tilde));
    let mut eps_t = 0.0_f64;
    for ((a, z), map) in obs_w.iter_all() {
        let lhs = map_times(f, map);
        let resid = linalg::inf_norm(&(lhs - f * compressed.map(a, z)));
        eps_t = eps_t.max(resid);
    }
    let a_mat = f * &basis.f_dag;
    let a_inf = linalg::inf_norm(&a_mat);
    let eye = DMatrix::<f64>::identity(model.n_states, model.n_states);
    let i_minus_a_inf = linalg::inf_norm(&(eye - &a_mat));
    let contraction_margin = model.discount * a_inf;

    let (value_loss_bound, reason) = if contraction_margin < 1.0 {
        let v_sup = v_sup_estimate.unwrap_or_else(|| default_value_sup_estimate(model));
        let bound = i_minus_a_inf / (1.0 - contraction_margin)
            * (linalg::inf_norm(&model.reward) + model.discount * model.n_obs as f64 * v_sup);
        (Some(bound), None)
    } else {
        (
            None,
            Some(format!(
                "contraction margin eta*||A||_inf = {contraction_margin:.6} >= 1; the \
                 compressed recursion need not contract and the bound does not apply"
            )),
        )
    };

    Ok(CompressionErrorReport {
        eps_r,
        eps_t,
        a_inf,
        i_minus_a_inf,
        contraction_margin,
        value_loss_bound,
        bound_unavailable_reason: reason,
    })
}
