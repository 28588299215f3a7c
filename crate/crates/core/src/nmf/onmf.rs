//! Orthogonal NMF: `min_{F >= 0, Btilde >= 0} ||B - F Btilde||_F^2 +
//! lambda ||I - F F^T||_F^2`.
//!
//! Alternating multiplicative updates: the coefficient step is the standard
//! Frobenius rule, the basis step folds in the orthogonality-penalty
//! gradient. The penalty is soft by construction (a strictly low-rank F can
//! never satisfy `F F^T = I`); the automatic lambda balances the two terms at
//! start: `lambda = ||B||_F^2 / n`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::rng::rng_for;
use crate::vdc::{CompressionBasis, CompressionMethod};

use super::{
    check_nonnegative_data, init_factor, ConvergenceTest, FactorisationTrace, LambdaChoice,
    NmfConfig, NmfVariant, StopCause, DIVISION_GUARD,
};

fn objective(b: &DMatrix<f64>, f: &DMatrix<f64>, bt: &DMatrix<f64>, lambda: f64) -> f64 {
    let recon = (b - f * bt).iter().map(|v| v * v).sum::<f64>();
    let eye = DMatrix::<f64>::identity(f.nrows(), f.nrows());
    let pen = (eye - f * f.transpose()).iter().map(|v| v * v).sum::<f64>();
    recon + lambda * pen
}

/// `Btilde <- Btilde .* (F^T B) ./ (F^T F Btilde)`; provably non-increasing
/// for the reconstruction term and it does not touch the penalty.
fn update_coefficients(
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    guards: &mut usize,
) -> DMatrix<f64> {
    let numer = f.transpose() * b;
    let denom = (f.transpose() * f) * bt;
    DMatrix::from_fn(bt.nrows(), bt.ncols(), |i, j| {
        let d = denom[(i, j)];
        if d < DIVISION_GUARD {
            *guards += 1;
            bt[(i, j)]
        } else {
            bt[(i, j)] * numer[(i, j)] / d
        }
    })
}

/// `F <- F .* (B Btilde^T + 2 lambda F) ./ (F Btilde Btilde^T +
/// 2 lambda F F^T F)`, the positive/negative gradient split of the penalised
/// objective.
fn update_basis(
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    lambda: f64,
    guards: &mut usize,
) -> DMatrix<f64> {
    let btt = bt.transpose();
    let numer = b * &btt + 2.0 * lambda * f;
    let denom = f * (bt * &btt) + 2.0 * lambda * (f * (f.transpose() * f));
    DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| {
        let d = denom[(i, j)];
        if d < DIVISION_GUARD {
            *guards += 1;
            f[(i, j)]
        } else {
            f[(i, j)] * numer[(i, j)] / d
        }
    })
}

/// Runs O-NMF; the decompression map is `F^T`.
pub fn onmf_factorize(
    b: &DMatrix<f64>,
    cfg: &NmfConfig,
) -> Result<(CompressionBasis, FactorisationTrace)> {
    cfg.validate()?;
    if cfg.variant != NmfVariant::Onmf {
        return Err(Error::Config(format!(
            "onmf_factorize called with variant {:?}",
            cfg.variant
        )));
    }
    check_nonnegative_data(b)?;
    let n = b.nrows();
    let m = b.ncols();
    let lambda = match cfg.lambda {
        LambdaChoice::Fixed(l) => l,
        // Balance the two loss terms at start: ||I||_F^2 = n.
        LambdaChoice::Auto => b.iter().map(|v| v * v).sum::<f64>() / n as f64,
    };

    let mut rng = rng_for(cfg.seed, 1);
    let mut f = init_factor(&mut rng, n, cfg.k);
    let mut bt = init_factor(&mut rng, cfg.k, m);
    let prod_norm = (&f * &bt).norm();
    if prod_norm > 0.0 {
        bt *= b.norm() / prod_norm;
    }

    let mut guards = 0;
    let mut objective_trace = vec![objective(b, &f, &bt, lambda)];
    let mut stop = StopCause::MaxIters;
    let mut iterations = cfg.max_iters;
    let mut convergence = ConvergenceTest::new(cfg.tol);
    for it in 1..=cfg.max_iters {
        let g_prev = *objective_trace.last().unwrap();
        bt = update_coefficients(b, &f, &bt, &mut guards);
        // The basis step has no monotonicity guarantee with the penalty
        // gradient folded in; blend back on overshoot. A few ulps of slack
        // keep rounding noise from freezing the iteration near a plateau.
        let g_mid = objective(b, &f, &bt, lambda);
        let slack = 4.0 * f64::EPSILON * (1.0 + g_mid.abs());
        let mut f_new = update_basis(b, &f, &bt, lambda, &mut guards);
        for _ in 0..40 {
            if objective(b, &f_new, &bt, lambda) <= g_mid + slack {
                break;
            }
            f_new = 0.5 * (&f_new + &f);
        }
        if objective(b, &f_new, &bt, lambda) <= g_mid + slack {
            f = f_new;
        }
        let g = objective(b, &f, &bt, lambda);
        objective_trace.push(g);
        if convergence.update(g_prev, g) {
            stop = StopCause::Tol;
            iterations = it;
            break;
        }
    }

    let margin = cfg
        .discount
        .map(|eta| eta * inf_norm(&(&f * f.transpose())));
    let provenance = format!(
        "onmf k={} lambda={lambda:e} iters={iterations} stop={stop:?}",
        cfg.k
    );
    let basis = CompressionBasis::new_with_flags(
        f.clone(),
        f.transpose(),
        CompressionMethod::Onmf,
        margin,
        provenance,
    );
    Ok((
        basis,
        FactorisationTrace {
            objective: objective_trace,
            iterations,
            stop,
            division_guards: guards,
        },
    ))
}
