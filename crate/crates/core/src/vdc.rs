//! Value-directed compression: Krylov-subspace basis construction with
//! rank-based or residual-threshold dependence tests (lossless) and greedy
//! max-residual truncation (lossy), plus the least-squares fit of the
//! compressed reward and transition maps.
//!
//! The candidate set starts from the reward columns and grows by propagating
//! every accepted column through every observation-weighted transition map.
//! Dependence tests follow the configured mode:
//!
//! * `LosslessRank`: a candidate is kept iff appending it increases the
//!   numerical rank (SVD cutoff `max(n, k) * eps * sigma_max`).
//! * `LosslessResidual { tau }`: kept iff its least-squares residual against
//!   the current basis is `>= tau`.
//! * `LossyGreedy { k }`: each round selects the candidate with the largest
//!   residual, until `k` columns are accepted.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, OrthoBasis};
use crate::pomdp::{ObsWeightedTransitions, Pomdp};

/// Candidate-selection and dependence-test strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VdcMode {
    /// FIFO selection, numerical-rank dependence test.
    LosslessRank,
    /// FIFO selection, least-squares residual threshold.
    LosslessResidual { tau: f64 },
    /// Greedy max-residual selection truncated at `k` columns.
    LossyGreedy { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdcConfig {
    pub mode: VdcMode,
    /// Absolute singular-value cutoff for the numerical-rank tests; `None`
    /// uses the standard `max(n, k) * eps * sigma_max` convention.
    pub rank_tol: Option<f64>,
}

impl VdcConfig {
    pub fn new(mode: VdcMode) -> Self {
        VdcConfig {
            mode,
            rank_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.rank_tol {
            if !(t > 0.0) {
                return Err(Error::Config(format!("rank_tol must be > 0, got {t}")));
            }
        }
        match self.mode {
            VdcMode::LosslessResidual { tau } if !(tau > 0.0) => Err(Error::Config(format!(
                "residual threshold tau must be > 0, got {tau}"
            ))),
            VdcMode::LossyGreedy { k: 0 } => {
                Err(Error::Config("lossy truncation size k must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Which algorithm produced a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CompressionMethod {
    Vdc,
    Onmf,
    Lpnmf,
    Pnmf,
}

impl std::fmt::Display for CompressionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CompressionMethod::Vdc => "vdc",
            CompressionMethod::Onmf => "onmf",
            CompressionMethod::Lpnmf => "lpnmf",
            CompressionMethod::Pnmf => "pnmf",
        };
        write!(f, "{s}")
    }
}

/// A compression basis F with its paired decompression map.
///
/// For the NMF family `f_dag = f^T`; for VDC it is the Moore-Penrose
/// pseudo-inverse. `nonnegative` reflects the actual entries; domination
/// pruning in the compressed space is sound only when it is set.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionBasis {
    pub f: DMatrix<f64>,
    pub f_dag: DMatrix<f64>,
    pub method: CompressionMethod,
    pub nonnegative: bool,
    /// `eta * ||F F_dag||_inf` when the producing algorithm knew the
    /// discount; below 1 the compressed Bellman recursion contracts.
    pub contraction_margin: Option<f64>,
    pub provenance: String,
}

impl CompressionBasis {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn k(&self) -> usize {
        self.f.ncols()
    }

    pub fn min_entry(&self) -> f64 {
        self.f.iter().fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Stable identifier: FNV-1a over method, dimensions and the F bytes.
    pub fn id(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        eat(self.method.to_string().as_bytes());
        eat(&(self.n() as u64).to_le_bytes());
        eat(&(self.k() as u64).to_le_bytes());
        for i in 0..self.f.nrows() {
            for j in 0..self.f.ncols() {
                eat(&self.f[(i, j)].to_le_bytes());
            }
        }
        h
    }

    pub(crate) fn new_with_flags(
        f: DMatrix<f64>,
        f_dag: DMatrix<f64>,
        method: CompressionMethod,
        contraction_margin: Option<f64>,
        provenance: String,
    ) -> Self {
        let nonnegative = f.iter().all(|&v| v >= 0.0);
        CompressionBasis {
            f,
            f_dag,
            method,
            nonnegative,
            contraction_margin,
            provenance,
        }
    }
}

/// Least-squares residual `||c - F w||_2` with `w` the minimiser; an empty
/// basis gives `||c||_2`.
pub fn dependence_residual(f: &DMatrix<f64>, c: &DVector<f64>) -> f64 {
    linalg::lstsq_residual(f, c)
}

fn bitkey(v: &DVector<f64>) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Is `y` linearly dependent on the accepted columns, under the mode's test?
fn dependent(basis: &OrthoBasis, y: &DVector<f64>, cfg: &VdcConfig) -> bool {
    match cfg.mode {
        VdcMode::LosslessRank | VdcMode::LossyGreedy { .. } => {
            !basis.rank_increases_with(y, cfg.rank_tol)
        }
        VdcMode::LosslessResidual { tau } => basis.residual(y) < tau,
    }
}

/// Runs the Krylov iteration and returns the basis (decompression map fitted
/// via pseudo-inverse). A zero reward matrix yields an empty basis whose
/// provenance carries a warning.
pub fn krylov_basis(
    model: &Pomdp,
    obs_w: &ObsWeightedTransitions,
    cfg: &VdcConfig,
) -> Result<CompressionBasis> {
    cfg.validate()?;
    let report = model.validate();
    if !report.is_valid() {
        return Err(Error::Invalid(report));
    }

    let n = model.n_states;
    let mut basis = OrthoBasis::new(n);
    let mut candidates: Vec<DVector<f64>> = (0..model.n_actions)
        .map(|a| model.reward.column(a).into_owned())
        .collect();
    let mut seen: HashSet<Vec<u64>> = candidates.iter().map(bitkey).collect();

    let target_k = match cfg.mode {
        VdcMode::LossyGreedy { k } => Some(k),
        _ => None,
    };

    loop {
        // Drop candidates dependent on the current basis (covers the initial
        // reduction of R to its independent columns).
        let keep: Vec<bool> = candidates
            .par_iter()
            .map(|y| !dependent(&basis, y, cfg))
            .collect();
        let mut kept = Vec::with_capacity(candidates.len());
        for (y, k) in candidates.into_iter().zip(keep) {
            if k {
                kept.push(y);
            }
        }
        candidates = kept;

        if candidates.is_empty() {
            break;
        }
        if let Some(k) = target_k {
            if basis.len() >= k {
                break;
            }
        }

        let chosen = match cfg.mode {
            VdcMode::LosslessRank | VdcMode::LosslessResidual { .. } => 0,
            VdcMode::LossyGreedy { .. } => {
                let residuals: Vec<f64> =
                    candidates.par_iter().map(|y| basis.residual(y)).collect();
                let mut best = 0;
                for (i, &r) in residuals.iter().enumerate() {
                    if r > residuals[best] {
                        best = i;
                    }
                }
                best
            }
        };
        let c = candidates.remove(chosen);
        if !basis.push(c.clone()) {
            // Numerically nothing left outside the span; treat as dependent.
            continue;
        }
        for (_, map) in obs_w.iter_all() {
            let grown = map.mat_vec(&c);
            let key = bitkey(&grown);
            if seen.insert(key) {
                candidates.push(grown);
            }
        }
    }

    let f = basis.matrix();
    let cols = f.ncols();
    let f_dag = if cols == 0 {
        DMatrix::zeros(0, n)
    } else {
        linalg::pseudo_inverse(&f)?
    };
    let mode_desc = match cfg.mode {
        VdcMode::LosslessRank => "lossless-rank (dependence: numerical rank)".to_string(),
        VdcMode::LosslessResidual { tau } => {
            format!("lossless-residual tau={tau:e} (dependence: least-squares residual)")
        }
        VdcMode::LossyGreedy { k } => {
            format!("lossy-greedy k={k} (dependence: numerical rank)")
        }
    };
    let mut provenance = format!("vdc {mode_desc}; columns={cols}");
    if cols == 0 {
        provenance.push_str("; warning: reward matrix had no independent columns");
    }
    let margin = if cols == 0 {
        None
    } else {
        Some(model.discount * linalg::inf_norm(&(&f * &f_dag)))
    };
    Ok(CompressionBasis::new_with_flags(
        f,
        f_dag,
        CompressionMethod::Vdc,
        margin,
        provenance,
    ))
}

/// Solves the compressed-map regression via the pseudo-inverse:
/// `R~ = F_dag R` and `T~^{a,z} = F_dag T^{a,z} F`, the Frobenius
/// least-squares minimisers. Rejects rank-deficient F.
pub fn fit_compressed_maps(
    model: &Pomdp,
    obs_w: &ObsWeightedTransitions,
    f: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    if f.ncols() == 0 {
        return Err(Error::RankDeficient("basis has no columns".into()));
    }
    if linalg::numerical_rank(f) < f.ncols() {
        return Err(Error::RankDeficient(format!(
            "basis has {} columns but numerical rank {}",
            f.ncols(),
            linalg::numerical_rank(f)
        )));
    }
    let f_dag = linalg::pseudo_inverse(f)?;
    Ok(compressed_products(model, obs_w, f, &f_dag))
}

/// The raw products behind both the lossless equations and lossy regression:
/// shared by `fit_compressed_maps` and `compressed::build_compressed`.
pub(crate) fn compressed_products(
    model: &Pomdp,
    obs_w: &ObsWeightedTransitions,
    f: &DMatrix<f64>,
    f_dag: &DMatrix<f64>,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let r_tilde = f_dag * &model.reward;
    let t_tilde: Vec<DMatrix<f64>> = obs_w
        .iter_all()
        .map(|(_, map)| {
            let tf = map_times(f, map);
            f_dag * tf
        })
        .collect();
    (r_tilde, t_tilde)
}

/// `T^{a,z} * F`, column by column.
pub(crate) fn map_times(f: &DMatrix<f64>, map: &crate::linalg::MaybeSparse) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(map.nrows(), f.ncols());
    for j in 0..f.ncols() {
        let col = map.mat_vec(&f.column(j).into_owned());
        out.set_column(j, &col);
    }
    out
}
