//! Locality-preserving NMF: unnormalised KL reconstruction of the
//! delta-subsampled belief set plus a symmetric-KL locality risk between
//! compressed beliefs, weighted over the KNN neighbourhood graph:
//!
//! ```text
//! min_{F >= 0, Bt >= 0}  D_KL(B' || F Bt) + mu * sum_{(i,j) in E} sKL(bt_i, bt_j)
//! ```
//!
//! Updates are multiplicative with the locality gradient split into its
//! nonnegative parts; unlike P-NMF/O-NMF, no monotonicity is guaranteed
//! (or asserted) for this loss. The decompression map is fitted afterwards
//! as the nonnegative least-squares solution of `I ~ F F_dag`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::rng::rng_for;
use crate::sampling::NeighbourhoodGraph;
use crate::vdc::{CompressionBasis, CompressionMethod};

use super::{
    check_nonnegative_data, init_factor, ConvergenceTest, FactorisationTrace, NmfConfig,
    NmfVariant, StopCause, DIVISION_GUARD, KL_EPS,
};

/// Unnormalised KL divergence `sum x ln(x/y) - x + y` with the epsilon floor
/// inside the logarithm.
pub fn unnormalised_kl(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for (xv, yv) in x.iter().zip(y.iter()) {
        if *xv > 0.0 {
            total += xv * (xv.ln() - yv.max(KL_EPS).ln()) - xv + yv;
        } else {
            total += yv;
        }
    }
    total
}

/// Symmetric KL between two nonnegative vectors (epsilon-floored).
pub fn symmetric_kl(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v.iter())
        .map(|(&a, &b)| (a - b) * ((a.max(KL_EPS)).ln() - (b.max(KL_EPS)).ln()))
        .sum()
}

fn locality_risk(bt: &DMatrix<f64>, graph: &NeighbourhoodGraph) -> f64 {
    graph
        .edge_pairs()
        .into_iter()
        .map(|(i, j)| {
            let ci: Vec<f64> = bt.column(i).iter().copied().collect();
            let cj: Vec<f64> = bt.column(j).iter().copied().collect();
            symmetric_kl(&ci, &cj)
        })
        .sum()
}

fn objective(
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    mu: f64,
    graph: &NeighbourhoodGraph,
) -> f64 {
    unnormalised_kl(b, &(f * bt)) + mu * locality_risk(bt, graph)
}

/// Nonnegative fit of the decompression map: multiplicative updates on
/// `||I - F G||_F^2` from a scaled `F^T` start.
fn fit_decompression(f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let fft = f * f.transpose();
    let scale = {
        let num = fft.trace();
        let den = fft.iter().map(|v| v * v).sum::<f64>();
        if den > 0.0 {
            (num / den).max(KL_EPS)
        } else {
            1.0
        }
    };
    let mut g = f.transpose() * scale;
    let ftf = f.transpose() * f;
    let ft = f.transpose();
    let mut prev = f64::INFINITY;
    for _ in 0..2000 {
        let denom = &ftf * &g;
        g = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
            let d = denom[(i, j)];
            if d < DIVISION_GUARD {
                g[(i, j)]
            } else {
                g[(i, j)] * ft[(i, j)] / d
            }
        });
        let eye = DMatrix::<f64>::identity(n, n);
        let cur = (eye - f * &g).iter().map(|v| v * v).sum::<f64>();
        if (prev - cur).abs() / prev.abs().max(1e-30) < 1e-12 {
            break;
        }
        prev = cur;
    }
    g
}

/// Runs LP-NMF over the (already delta-subsampled) belief columns and the
/// locality graph built on them.
pub fn lpnmf_factorize(
    b: &DMatrix<f64>,
    cfg: &NmfConfig,
    graph: &NeighbourhoodGraph,
) -> Result<(CompressionBasis, FactorisationTrace)> {
    let (basis, trace, _) = lpnmf_factorize_full(b, cfg, graph)?;
    Ok((basis, trace))
}

/// As `lpnmf_factorize` but also returns the trained coefficient matrix
/// `Btilde` (k x m) - the compressed beliefs the locality risk acted on.
pub fn lpnmf_factorize_full(
    b: &DMatrix<f64>,
    cfg: &NmfConfig,
    graph: &NeighbourhoodGraph,
) -> Result<(CompressionBasis, FactorisationTrace, DMatrix<f64>)> {
    cfg.validate()?;
    if cfg.variant != NmfVariant::Lpnmf {
        return Err(Error::Config(format!(
            "lpnmf_factorize called with variant {:?}",
            cfg.variant
        )));
    }
    check_nonnegative_data(b)?;
    if graph.n_nodes() != b.ncols() {
        return Err(Error::Dim(format!(
            "graph has {} nodes but B has {} columns",
            graph.n_nodes(),
            b.ncols()
        )));
    }
    let n = b.nrows();
    let m = b.ncols();
    let k = cfg.k;
    let mu = cfg.locality_weight;

    let mut rng = rng_for(cfg.seed, 2);
    let mut f = init_factor(&mut rng, n, k);
    let mut bt = init_factor(&mut rng, k, m);
    let prod_norm = (&f * &bt).norm();
    if prod_norm > 0.0 {
        bt *= b.norm() / prod_norm;
    }

    let mut guards = 0usize;
    let mut trace = vec![objective(b, &f, &bt, mu, graph)];
    let mut stop = StopCause::MaxIters;
    let mut iterations = cfg.max_iters;
    let mut convergence = ConvergenceTest::new(cfg.tol);

    for it in 1..=cfg.max_iters {
        let g_prev = *trace.last().unwrap();

        // F step: standard KL-NMF rule on the reconstruction term.
        let y = &f * &bt;
        let ratio = DMatrix::from_fn(n, m, |i, j| b[(i, j)] / y[(i, j)].max(KL_EPS));
        let numer = &ratio * bt.transpose();
        let col_sums: Vec<f64> = (0..k).map(|a| bt.row(a).sum()).collect();
        f = DMatrix::from_fn(n, k, |i, a| {
            let d = col_sums[a];
            if d < DIVISION_GUARD {
                guards += 1;
                f[(i, a)]
            } else {
                f[(i, a)] * numer[(i, a)] / d
            }
        });

        // Bt step: KL gradient plus the locality gradient, split into
        // nonnegative parts.
        let y = &f * &bt;
        let ratio = DMatrix::from_fn(n, m, |i, j| b[(i, j)] / y[(i, j)].max(KL_EPS));
        let neg_kl = f.transpose() * &ratio;
        let f_col_sums: Vec<f64> = (0..k).map(|a| f.column(a).sum()).collect();
        let mut pos = DMatrix::from_fn(k, m, |a, _| f_col_sums[a]);
        let mut neg = neg_kl;
        if mu > 0.0 {
            for i in 0..m {
                for &j in graph.neighbours(i) {
                    for a in 0..k {
                        let ui = bt[(a, i)].max(KL_EPS);
                        let uj = bt[(a, j)].max(KL_EPS);
                        let log_ratio = ui.ln() - uj.ln();
                        pos[(a, i)] += mu * (log_ratio.max(0.0) + 1.0);
                        neg[(a, i)] += mu * ((-log_ratio).max(0.0) + uj / ui);
                    }
                }
            }
        }
        bt = DMatrix::from_fn(k, m, |a, i| {
            let d = pos[(a, i)];
            if d < DIVISION_GUARD {
                guards += 1;
                bt[(a, i)]
            } else {
                bt[(a, i)] * neg[(a, i)] / d
            }
        });

        let g = objective(b, &f, &bt, mu, graph);
        trace.push(g);
        if convergence.update(g_prev, g) {
            stop = StopCause::Tol;
            iterations = it;
            break;
        }
    }

    let f_dag = fit_decompression(&f);
    let margin = cfg.discount.map(|eta| eta * inf_norm(&(&f * &f_dag)));
    let provenance = format!(
        "lpnmf k={k} mu={mu:e} delta={:e} knn={} iters={iterations} stop={stop:?}",
        cfg.delta, cfg.knn_k
    );
    let basis =
        CompressionBasis::new_with_flags(f, f_dag, CompressionMethod::Lpnmf, margin, provenance);
    Ok((
        basis,
        FactorisationTrace {
            objective: trace,
            iterations,
            stop,
            division_guards: guards,
        },
        bt,
    ))
}

/// Compressed images of the training columns under a basis (`F^T B`), as
/// used by the locality diagnostics.
pub fn compressed_columns(basis: &CompressionBasis, b: &DMatrix<f64>) -> DMatrix<f64> {
    basis.f.transpose() * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::Belief;
    use crate::sampling::{knn_graph, BeliefMatrix, SampleProvenance};
    use nalgebra::DVector;

    fn belief_matrix(cols: Vec<DVector<f64>>) -> BeliefMatrix {
        let beliefs: Vec<Belief> = cols
            .into_iter()
            .map(|c| Belief::normalised(c).unwrap())
            .collect();
        BeliefMatrix::from_columns(
            &beliefs,
            SampleProvenance {
                seed: 0,
                policy: "manual".into(),
                horizon_cap: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn disjoint_supports_reach_tiny_kl_residual() {
        let cols = vec![
            DVector::from_vec(vec![0.7, 0.3, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.4, 0.6]),
            DVector::from_vec(vec![0.7, 0.3, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 0.4, 0.6]),
        ];
        let bm = belief_matrix(cols);
        let graph = knn_graph(&bm, 1).unwrap();
        let mut cfg = NmfConfig::lpnmf(2, 3);
        cfg.locality_weight = 0.0;
        cfg.max_iters = 20_000;
        cfg.tol = 1e-15;
        let (basis, _, bt) = lpnmf_factorize_full(bm.matrix(), &cfg, &graph).unwrap();
        // An exact factorisation exists; the trained reconstruction must
        // drive the unnormalised KL to (numerically) zero.
        let kl = unnormalised_kl(bm.matrix(), &(&basis.f * &bt));
        assert!(kl.abs() <= 1e-6, "kl residual {kl}");
        assert!(basis.nonnegative);
    }

    #[test]
    fn identical_beliefs_on_an_edge_compress_together() {
        let cols = vec![
            DVector::from_vec(vec![0.5, 0.3, 0.2]),
            DVector::from_vec(vec![0.5, 0.3, 0.2]),
            DVector::from_vec(vec![0.1, 0.1, 0.8]),
        ];
        let bm = belief_matrix(cols);
        let graph = knn_graph(&bm, 1).unwrap();
        // Nodes 0 and 1 are identical, so they select each other.
        assert!(graph.neighbours(0).contains(&1));
        let mut cfg = NmfConfig::lpnmf(2, 5);
        cfg.locality_weight = 0.5;
        cfg.max_iters = 50_000;
        cfg.tol = 1e-16;
        let (_, trace, bt) = lpnmf_factorize_full(bm.matrix(), &cfg, &graph).unwrap();
        assert!(trace.objective.iter().all(|g| g.is_finite()));
        let c0: Vec<f64> = bt.column(0).iter().copied().collect();
        let c1: Vec<f64> = bt.column(1).iter().copied().collect();
        let skl = symmetric_kl(&c0, &c1);
        assert!(skl <= 1e-8, "compressed images differ: sKL = {skl}");
    }

    #[test]
    fn growing_mu_shrinks_pairwise_skl() {
        let cols = vec![
            DVector::from_vec(vec![0.8, 0.1, 0.1]),
            DVector::from_vec(vec![0.1, 0.8, 0.1]),
            DVector::from_vec(vec![0.1, 0.1, 0.8]),
            DVector::from_vec(vec![0.4, 0.4, 0.2]),
        ];
        let bm = belief_matrix(cols);
        let graph = knn_graph(&bm, 2).unwrap();
        let mut worst = f64::INFINITY;
        for &mu in &[0.0, 1.0, 1e3, 1e6] {
            let mut cfg = NmfConfig::lpnmf(2, 9);
            cfg.locality_weight = mu;
            cfg.max_iters = 4000;
            cfg.tol = 1e-14;
            let (_, _, bt) = lpnmf_factorize_full(bm.matrix(), &cfg, &graph).unwrap();
            let m = bt.ncols();
            let mut max_skl = 0.0_f64;
            for i in 0..m {
                for j in (i + 1)..m {
                    let ci: Vec<f64> = bt.column(i).iter().copied().collect();
                    let cj: Vec<f64> = bt.column(j).iter().copied().collect();
                    max_skl = max_skl.max(symmetric_kl(&ci, &cj));
                }
            }
            assert!(
                max_skl <= worst + 1e-9,
                "max sKL grew at mu={mu}: {max_skl} > {worst}"
            );
            worst = max_skl;
        }
    }

    #[test]
    fn decompression_map_is_nonnegative_and_fits() {
        let cols = vec![
            DVector::from_vec(vec![0.9, 0.1, 0.0]),
            DVector::from_vec(vec![0.0, 0.2, 0.8]),
            DVector::from_vec(vec![0.5, 0.5, 0.0]),
        ];
        let bm = belief_matrix(cols);
        let graph = knn_graph(&bm, 1).unwrap();
        let mut cfg = NmfConfig::lpnmf(2, 1);
        cfg.max_iters = 2000;
        let (basis, _) = lpnmf_factorize(bm.matrix(), &cfg, &graph).unwrap();
        assert!(basis.f_dag.iter().all(|&v| v >= 0.0));
        assert_eq!(basis.f_dag.nrows(), 2);
        assert_eq!(basis.f_dag.ncols(), 3);
        // The fit must beat the trivial zero map on ||I - F G||.
        let eye = DMatrix::<f64>::identity(3, 3);
        let fit = (&eye - &basis.f * &basis.f_dag).norm();
        assert!(fit < eye.norm());
    }
}
