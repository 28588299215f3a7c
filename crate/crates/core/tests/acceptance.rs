//! Acceptance suite.
//!
//! One test per criterion, each printing a `criterion NN PASS/FAIL` line.
//! Criteria 1-5 exercise the Coffee and Hallway2 benchmark models; the model
//! files are not redistributable with this repository, so those tests are
//! `#[ignore]` by default and run with
//! `BSQZ_BENCH_DIR=<dir> cargo test --release -p bsqz-core --test acceptance -- --ignored`
//! once `coffee.pomdp` / `hallway2.pomdp` are placed in `<dir>` (default
//! `assets/benchmarks/`). Criteria 6-11 are property-based and always run;
//! criterion 12 lives in the CLI crate's test suite, next to the binary it
//! exercises.

use nalgebra::{DMatrix, DVector};

use bsqz_core::compressed::{build_compressed, error_report};
use bsqz_core::diagnostics::{
    domination_soundness_detector, fit_decay_rate, value_loss_bound_check,
};
use bsqz_core::evaluation::{divergence_verdict, simulate_policy, EvalProtocol, Verdict};
use bsqz_core::fixtures::random_pomdp;
use bsqz_core::nmf::{pnmf_factorize, pnmf_gradient, pnmf_objective, NmfConfig};
use bsqz_core::pomdp::{synth_lowrank_pomdp, Belief, Pomdp};
use bsqz_core::rng::rng_for;
use bsqz_core::sampling::{sample_beliefs, BeliefMatrix, SampleProvenance};
use bsqz_core::solver::{perseus_solve, solve_synchronous, LinearBeliefProcess, PerseusConfig};
use bsqz_core::vdc::{krylov_basis, CompressionBasis, CompressionMethod, VdcConfig, VdcMode};

use rand::Rng;

fn pass(criterion: &str, detail: String) {
    println!("criterion {criterion} PASS: {detail}");
}

/// Random nonnegative basis (decompression map `F^T`) rescaled so
/// `eta ||F F^T||_inf` hits the requested margin.
fn random_contractive_basis(
    n: usize,
    k: usize,
    eta: f64,
    margin: f64,
    seed: u64,
) -> CompressionBasis {
    let mut rng = rng_for(seed, 0);
    let mut f = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() + 0.05);
    let a_inf = bsqz_core::linalg::inf_norm(&(&f * f.transpose()));
    let scale = (margin / (eta * a_inf)).sqrt();
    f *= scale;
    CompressionBasis {
        f: f.clone(),
        f_dag: f.transpose(),
        method: CompressionMethod::Pnmf,
        nonnegative: true,
        contraction_margin: Some(margin),
        provenance: format!("random contractive basis margin={margin}"),
    }
}

// ---------------------------------------------------------------------------
// Criterion 6: lossless round-trip on low-rank fixtures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_lossless_roundtrip_on_lowrank_fixtures() {
    let mut worst: f64 = 0.0;
    for (k, n, seed) in [(2usize, 10usize, 3u64), (3, 18, 4), (5, 30, 5)] {
        let model = synth_lowrank_pomdp(k, n, seed).unwrap();
        let obs_w = model.obs_weighted_transitions().unwrap();
        let beliefs = sample_beliefs(&model, 250, seed + 10, 30).unwrap();

        let mut cfg = NmfConfig::pnmf(k, seed + 20);
        cfg.max_iters = 120_000;
        cfg.tol = 1e-14;
        let (basis, _) = pnmf_factorize(beliefs.matrix(), &cfg).unwrap();
        let recon = (beliefs.matrix() - &basis.f * (basis.f.transpose() * beliefs.matrix())).norm();
        assert!(recon < 1e-6, "k={k} n={n}: factorisation residual {recon}");

        let compressed = build_compressed(&model, &obs_w, &basis).unwrap();
        let orig = LinearBeliefProcess::from_pomdp(&model, &obs_w, &beliefs);
        let comp = LinearBeliefProcess::from_compressed(&compressed, &beliefs).unwrap();
        let cfg_p = PerseusConfig {
            max_stages: 500,
            seed: 9,
            value_floor_init: true,
        };
        let (v, _) = perseus_solve(&orig, None, &cfg_p).unwrap();
        let (v_t, _) = perseus_solve(&comp, None, &cfg_p).unwrap();

        for (x, xt) in orig.points.iter().zip(&comp.points) {
            let gap = (v.value(x) - v_t.value(xt)).abs();
            worst = worst.max(gap);
            assert!(
                gap <= 1e-3,
                "k={k} n={n}: per-belief value gap {gap} exceeds 1e-3"
            );
        }
    }
    pass(
        "06",
        format!("max per-belief |V - Vtilde| = {worst:.3e} <= 1e-3"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: P-NMF monotone objective + gradient check.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_pnmf_monotonicity_and_gradient() {
    // 100 random (B, k, lambda) instances: non-increasing trace.
    let lambdas = [0.0, 1e-3, 1e-2, 0.1, 1.0];
    for i in 0..100u64 {
        let mut rng = rng_for(7000 + i, 0);
        let n = 3 + (i % 6) as usize;
        let m = 4 + (i % 9) as usize;
        let k = 1 + (i % 3) as usize;
        let lambda = lambdas[(i % 5) as usize];
        let b = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() + 1e-3);
        let mut cfg = NmfConfig::pnmf(k, 100 + i);
        cfg.lambda = bsqz_core::nmf::LambdaChoice::Fixed(lambda);
        cfg.max_iters = 80;
        cfg.tol = 1e-16;
        let (_, trace) = pnmf_factorize(&b, &cfg).unwrap();
        for w in trace.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-10,
                "instance {i}: objective rose {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    // 20 instances: analytic gradient vs central finite differences.
    let mut worst_rel: f64 = 0.0;
    for i in 0..20u64 {
        let mut rng = rng_for(7100 + i, 0);
        let f = DMatrix::from_fn(5, 2, |_, _| rng.random::<f64>() + 0.05);
        let b = DMatrix::from_fn(5, 4, |_, _| rng.random::<f64>() + 0.05);
        let lambda = if i % 2 == 0 { 0.0 } else { 0.3 };
        let grad = pnmf_gradient(&f, &b, lambda);
        let h = 1e-6;
        for r in 0..5 {
            for c in 0..2 {
                let mut fp = f.clone();
                let mut fm = f.clone();
                fp[(r, c)] += h;
                fm[(r, c)] -= h;
                let fd = (pnmf_objective(&fp, &b, lambda).unwrap()
                    - pnmf_objective(&fm, &b, lambda).unwrap())
                    / (2.0 * h);
                let rel = (fd - grad[(r, c)]).abs() / grad[(r, c)].abs().max(1.0);
                worst_rel = worst_rel.max(rel);
                assert!(rel <= 1e-5, "instance {i} entry ({r},{c}): rel error {rel}");
            }
        }
    }
    pass(
        "07",
        format!("100 monotone traces; gradient max rel error {worst_rel:.3e} <= 1e-5"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: contraction of the compressed recursion.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_contraction_geometric_decay() {
    let mut fitted: Vec<f64> = Vec::new();
    for i in 0..20u64 {
        let n = 4 + (i % 4) as usize;
        let k = 2 + (i % 2) as usize;
        let model = random_pomdp(n, 2, 3, 800 + i);
        let obs_w = model.obs_weighted_transitions().unwrap();
        let beliefs = sample_beliefs(&model, 30, 900 + i, 12).unwrap();
        let margin = 0.65 + 0.015 * (i % 20) as f64;
        let basis = random_contractive_basis(n, k, model.discount, margin, 950 + i);
        let compressed = build_compressed(&model, &obs_w, &basis).unwrap();
        let proc = LinearBeliefProcess::from_compressed(&compressed, &beliefs).unwrap();
        let (_, trace) = solve_synchronous(&proc, None, 80, 1e-13).unwrap();
        assert!(!trace.diverged, "instance {i} unexpectedly diverged");
        match fit_decay_rate(&trace.stage_max_change) {
            Some(beta) => {
                assert!(beta < 1.0, "instance {i}: fitted beta = {beta} >= 1");
                fitted.push(beta);
            }
            // Immediate convergence: decayed faster than we can fit.
            None => fitted.push(0.0),
        }
    }
    let max_beta = fitted.iter().copied().fold(0.0_f64, f64::max);
    pass(
        "08",
        format!("20 instances, max fitted beta = {max_beta:.4} < 1"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: domination-pruning soundness suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_domination_soundness_suite() {
    // Zero false alarms on nonnegative bases, 10^4 probes each.
    for i in 0..5u64 {
        let model = random_pomdp(6, 2, 3, 400 + i);
        let beliefs = sample_beliefs(&model, 50, 500 + i, 10).unwrap();
        let mut cfg = NmfConfig::pnmf(3, 600 + i);
        cfg.max_iters = 300;
        let (basis, _) = pnmf_factorize(beliefs.matrix(), &cfg).unwrap();
        assert!(basis.nonnegative);
        let rep = domination_soundness_detector(&basis, &beliefs, 10_000, 700 + i);
        assert!(rep.pass, "false alarm on nonnegative basis: {rep:?}");
    }

    // The hand-constructed negative-basis counterexample is detected.
    let f = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
    let basis = CompressionBasis {
        f: f.clone(),
        f_dag: f.transpose(),
        method: CompressionMethod::Vdc,
        nonnegative: false,
        contraction_margin: None,
        provenance: "hand-constructed counterexample".into(),
    };
    let beliefs = BeliefMatrix::from_columns(
        &[Belief::indicator(2, 1)],
        SampleProvenance {
            seed: 0,
            policy: "manual".into(),
            horizon_cap: 0,
        },
    )
    .unwrap();
    let rep = domination_soundness_detector(&basis, &beliefs, 10_000, 3);
    assert!(!rep.pass, "counterexample not detected");
    assert!(rep.witness.is_some());
    pass(
        "09",
        "5 x 10^4 probes clean on nonnegative bases; counterexample detected".into(),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: empirical value-loss bound.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_value_loss_bound_holds() {
    let mut tightest = f64::INFINITY;
    for i in 0..20u64 {
        let n = 3 + (i % 4) as usize;
        let model = random_pomdp(n, 2, 2 + (i % 2) as usize, 1000 + i);
        let obs_w = model.obs_weighted_transitions().unwrap();
        // Sampled beliefs plus the simplex corners for a stronger sup probe.
        let mut cols: Vec<Belief> = (0..n).map(|s| Belief::indicator(n, s)).collect();
        let sampled = sample_beliefs(&model, 25, 1100 + i, 10).unwrap();
        cols.extend((0..sampled.len()).map(|j| sampled.belief(j)));
        let beliefs = BeliefMatrix::from_columns(
            &cols,
            SampleProvenance {
                seed: 1100 + i,
                policy: "uniform-random+corners".into(),
                horizon_cap: 10,
            },
        )
        .unwrap();
        let margin = 0.5 + 0.02 * (i % 20) as f64;
        let basis = random_contractive_basis(n, 2, model.discount, margin, 1200 + i);
        let report = error_report(&model, &obs_w, &basis, None).unwrap();
        assert!(report.contraction_margin < 1.0);
        let check = value_loss_bound_check(&model, &obs_w, &basis, &beliefs, 700).unwrap();
        assert!(check.pass, "instance {i}: {:?}", check.note);
        tightest = tightest.min(check.margin);
    }
    pass(
        "10",
        format!("bound held on all 20 instances (smallest slack {tightest:.3e})"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: solver vs exact value-iteration oracles.
// ---------------------------------------------------------------------------

/// Exact upper envelope of lines over the 1-simplex (2-state beliefs
/// parameterised by p = b(s1)). A line is kept iff it attains the maximum on
/// some subinterval of [0, 1].
fn envelope_2state(lines: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let value = |l: &DVector<f64>, p: f64| l[0] * (1.0 - p) + l[1] * p;
    // Candidate breakpoints: all pairwise intersections clipped to [0, 1].
    let mut breaks = vec![0.0, 1.0];
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (a, b) = (&lines[i], &lines[j]);
            let denom = (b[1] - b[0]) - (a[1] - a[0]);
            if denom.abs() > 1e-14 {
                let p = (a[0] - b[0]) / denom;
                if (0.0..=1.0).contains(&p) {
                    breaks.push(p);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut keep = vec![false; lines.len()];
    let mut probes: Vec<f64> = breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.extend_from_slice(&breaks);
    for p in probes {
        let mut best = 0;
        for (i, l) in lines.iter().enumerate() {
            if value(l, p) > value(&lines[best], p) + 1e-13 {
                best = i;
            }
        }
        keep[best] = true;
    }
    lines
        .iter()
        .zip(&keep)
        .filter_map(|(l, &k)| k.then(|| l.clone()))
        .collect()
}

/// Exact finite-horizon value iteration for 2-state models: incremental
/// pruning with the exact 1D envelope. Independent of the solver code path.
fn exact_vi_2state(model: &Pomdp, horizon: usize) -> Vec<DVector<f64>> {
    let n = 2;
    let mut gamma: Vec<DVector<f64>> = vec![DVector::zeros(n)];
    // Dense T^{a,z} built straight from the model matrices.
    let t_az = |a: usize, z: usize| {
        DMatrix::from_fn(n, n, |i, j| {
            model.transition[a][(i, j)] * model.observation[a][(j, z)]
        })
    };
    for _ in 0..horizon {
        let mut all: Vec<DVector<f64>> = Vec::new();
        for a in 0..model.n_actions {
            // Start from the immediate reward, cross-sum one observation at
            // a time, pruning between steps.
            let mut partial: Vec<DVector<f64>> = vec![model.reward.column(a).into_owned()];
            for z in 0..model.n_obs {
                let m = t_az(a, z);
                let mut next: Vec<DVector<f64>> = Vec::new();
                for base in &partial {
                    for g in &gamma {
                        next.push(base + model.discount * (&m * g));
                    }
                }
                partial = envelope_2state(&next);
            }
            all.extend(partial);
        }
        gamma = envelope_2state(&all);
    }
    gamma
}

/// Grid value iteration with barycentric interpolation on the 2-simplex
/// (3-state models).
struct Grid3 {
    resolution: usize,
    values: Vec<f64>,
}

impl Grid3 {
    fn index(&self, i: usize, j: usize) -> usize {
        // Row-major over (i, j) with i + j <= r.
        let r = self.resolution;
        i * (r + 1) - i * (i.saturating_sub(1)) / 2 + j
    }

    fn node(&self, i: usize, j: usize) -> [f64; 3] {
        let r = self.resolution as f64;
        [
            i as f64 / r,
            j as f64 / r,
            (self.resolution - i - j) as f64 / r,
        ]
    }

    fn interpolate(&self, b: &[f64; 3]) -> f64 {
        let r = self.resolution as f64;
        let x = (b[0] * r).clamp(0.0, r);
        let y = (b[1] * r).clamp(0.0, r);
        let mut i0 = x.floor() as usize;
        let mut j0 = y.floor() as usize;
        if i0 + j0 >= self.resolution {
            // Clamp onto the far edge.
            let over = i0 + j0 - self.resolution + 1;
            let shave = over.min(j0);
            j0 -= shave;
            i0 -= over - shave;
        }
        let fx = x - i0 as f64;
        let fy = y - j0 as f64;
        let i1 = (i0 + 1).min(self.resolution);
        let j1 = (j0 + 1).min(self.resolution);
        if fx + fy <= 1.0 || i0 + j0 + 2 > self.resolution {
            let v00 = self.values[self.index(i0, j0)];
            let v10 = self.values[self.index(i1.min(self.resolution - j0), j0)];
            let v01 = self.values[self.index(i0, j1.min(self.resolution - i0))];
            v00 * (1.0 - fx - fy).max(0.0) + v10 * fx + v01 * fy
        } else {
            let v11 = self.values[self.index(i0 + 1, j0 + 1)];
            let v10 = self.values[self.index(i0 + 1, j0)];
            let v01 = self.values[self.index(i0, j0 + 1)];
            v10 * (1.0 - fy) + v01 * (1.0 - fx) + v11 * (fx + fy - 1.0)
        }
    }
}

fn grid_vi_3state(model: &Pomdp, resolution: usize, iters: usize) -> Grid3 {
    let r = resolution;
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    for i in 0..=r {
        for j in 0..=(r - i) {
            nodes.push((i, j));
        }
    }
    let mut grid = Grid3 {
        resolution: r,
        values: vec![0.0; nodes.len()],
    };
    for _ in 0..iters {
        let mut next = vec![0.0; nodes.len()];
        for (idx, &(i, j)) in nodes.iter().enumerate() {
            let b = grid.node(i, j);
            let mut best = f64::NEG_INFINITY;
            for a in 0..model.n_actions {
                let mut val = 0.0;
                for (s, &bs) in b.iter().enumerate() {
                    val += bs * model.reward[(s, a)];
                }
                for z in 0..model.n_obs {
                    // Unnormalised successor through T and Omega.
                    let mut succ = [0.0; 3];
                    for sp in 0..3 {
                        let mut pred = 0.0;
                        for (s, &bs) in b.iter().enumerate() {
                            pred += model.transition[a][(s, sp)] * bs;
                        }
                        succ[sp] = pred * model.observation[a][(sp, z)];
                    }
                    let likelihood: f64 = succ.iter().sum();
                    if likelihood <= 0.0 {
                        continue;
                    }
                    let normalised = [
                        succ[0] / likelihood,
                        succ[1] / likelihood,
                        succ[2] / likelihood,
                    ];
                    val += model.discount * likelihood * grid.interpolate(&normalised);
                }
                best = best.max(val);
            }
            next[idx] = best;
        }
        grid.values = next;
    }
    grid
}

#[test]
fn criterion_11_solver_matches_exact_value_iteration() {
    // Two-state model, exact incremental-pruning oracle at horizon 300.
    let model2 = {
        let t0 = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.3, 0.7]);
        let t1 = DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.6, 0.4]);
        let o = DMatrix::from_row_slice(2, 2, &[0.85, 0.15, 0.2, 0.8]);
        Pomdp {
            n_states: 2,
            n_actions: 2,
            n_obs: 2,
            transition: vec![t0, t1],
            observation: vec![o.clone(), o],
            reward: DMatrix::from_row_slice(2, 2, &[1.0, -0.4, 0.1, 0.8]),
            discount: 0.9,
            initial_belief: Belief::uniform(2),
        }
    };
    assert!(model2.validate().is_valid());
    let oracle = exact_vi_2state(&model2, 300);
    let uniform = DVector::from_vec(vec![0.5, 0.5]);
    let oracle_value = oracle
        .iter()
        .map(|g| g.dot(&uniform))
        .fold(f64::NEG_INFINITY, f64::max);

    let obs_w = model2.obs_weighted_transitions().unwrap();
    let points: Vec<DVector<f64>> = (0..=200)
        .map(|i| {
            let p = i as f64 / 200.0;
            DVector::from_vec(vec![1.0 - p, p])
        })
        .collect();
    let proc = LinearBeliefProcess::from_pomdp_points(&model2, &obs_w, points);
    let cfg = PerseusConfig {
        max_stages: 500,
        seed: 4,
        value_floor_init: true,
    };
    let (vf, _) = perseus_solve(&proc, None, &cfg).unwrap();
    let solver_value = vf.value(&uniform);
    let gap2 = (solver_value - oracle_value).abs();
    assert!(
        gap2 <= 1e-2,
        "2-state: solver {solver_value} vs oracle {oracle_value} (gap {gap2})"
    );

    // Three-state model, grid-interpolation oracle.
    let model3 = {
        let mut m = random_pomdp(3, 2, 3, 77);
        m.discount = 0.8;
        m
    };
    let grid = grid_vi_3state(&model3, 90, 300);
    let oracle3 = grid.interpolate(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);

    let obs_w3 = model3.obs_weighted_transitions().unwrap();
    let mut points3: Vec<DVector<f64>> = Vec::new();
    let r = 40usize;
    for i in 0..=r {
        for j in 0..=(r - i) {
            let b = [
                i as f64 / r as f64,
                j as f64 / r as f64,
                (r - i - j) as f64 / r as f64,
            ];
            points3.push(DVector::from_vec(b.to_vec()));
        }
    }
    // Ensure the probe point is in the set.
    points3.push(DVector::from_vec(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]));
    let probe = points3.last().unwrap().clone();
    let proc3 = LinearBeliefProcess::from_pomdp_points(&model3, &obs_w3, points3);
    let (vf3, _) = perseus_solve(&proc3, None, &cfg).unwrap();
    let solver3 = vf3.value(&probe);
    let gap3 = (solver3 - oracle3).abs();
    assert!(
        gap3 <= 1e-2,
        "3-state: solver {solver3} vs oracle {oracle3} (gap {gap3})"
    );
    pass(
        "11",
        format!("2-state gap {gap2:.2e}, 3-state gap {gap3:.2e}, both <= 1e-2"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 1-5: benchmark reproductions (need the model files).
// ---------------------------------------------------------------------------

fn bench_dir() -> std::path::PathBuf {
    match std::env::var("BSQZ_BENCH_DIR") {
        Ok(d) if !d.is_empty() => std::path::PathBuf::from(d),
        _ => std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/benchmarks"),
    }
}

fn load_benchmark(name: &str) -> Pomdp {
    let path = bench_dir().join(name);
    assert!(
        path.exists(),
        "benchmark model {} not found; place the community-format file there \
         or set BSQZ_BENCH_DIR",
        path.display()
    );
    bsqz_core::io::parse_pomdp(&path).expect("benchmark file parses")
}

fn hallway2() -> Pomdp {
    let model = load_benchmark("hallway2.pomdp");
    assert_eq!(model.n_states, 92, "hallway2 has 92 states");
    assert_eq!(model.n_actions, 5, "hallway2 has 5 actions");
    assert_eq!(model.n_obs, 17, "hallway2 has 17 observations");
    assert!(
        (model.discount - 0.95).abs() < 1e-12,
        "hallway2 discount is 0.95"
    );
    model
}

#[test]
#[ignore = "needs hallway2.pomdp under assets/benchmarks/ (or BSQZ_BENCH_DIR); ~30 min"]
fn criterion_01_hallway2_uncompressed_reward() {
    let model = hallway2();
    let obs_w = model.obs_weighted_transitions().unwrap();
    let beliefs = sample_beliefs(&model, 5000, 11, 250).unwrap();
    let proc = LinearBeliefProcess::from_pomdp(&model, &obs_w, &beliefs);
    let cfg = PerseusConfig {
        max_stages: 500,
        seed: 7,
        value_floor_init: true,
    };
    let (vf, trace) = perseus_solve(&proc, None, &cfg).unwrap();
    assert!(!trace.diverged);
    let proto = EvalProtocol {
        n_trajectories: 1000,
        horizon: 251,
        n_repeats: 5,
        seed: 23,
    };
    let result = simulate_policy(&model, &vf, None, &proto).unwrap();
    assert!(
        (0.29..=0.39).contains(&result.mean),
        "mean reward {} outside [0.29, 0.39]",
        result.mean
    );
    pass(
        "01",
        format!(
            "hallway2 uncompressed mean reward {:.3} in [0.29, 0.39]",
            result.mean
        ),
    );
}

#[test]
#[ignore = "needs hallway2.pomdp under assets/benchmarks/ (or BSQZ_BENCH_DIR)"]
fn criterion_02_hallway2_lossy_vdc_k40() {
    let model = hallway2();
    let obs_w = model.obs_weighted_transitions().unwrap();
    let beliefs = sample_beliefs(&model, 5000, 11, 250).unwrap();
    let basis = krylov_basis(
        &model,
        &obs_w,
        &VdcConfig::new(VdcMode::LossyGreedy { k: 40 }),
    )
    .unwrap();
    let compressed = build_compressed(&model, &obs_w, &basis).unwrap();
    let proc = LinearBeliefProcess::from_compressed(&compressed, &beliefs).unwrap();
    let cfg = PerseusConfig {
        max_stages: 500,
        seed: 7,
        value_floor_init: true,
    };
    let (vf, trace) = perseus_solve(&proc, None, &cfg).unwrap();
    let verdict = divergence_verdict(&trace);
    assert!(
        matches!(verdict, Verdict::Converged | Verdict::Plateaued),
        "expected converged/plateaued, got {verdict}"
    );
    let proto = EvalProtocol {
        n_trajectories: 1000,
        horizon: 251,
        n_repeats: 5,
        seed: 23,
    };
    let result = simulate_policy(&model, &vf, Some(&basis), &proto).unwrap();
    assert!(
        (0.12..=0.36).contains(&result.mean),
        "mean reward {} outside [0.12, 0.36]",
        result.mean
    );
    pass(
        "02",
        format!(
            "hallway2 lossy VDC k=40: verdict {verdict}, mean reward {:.3}",
            result.mean
        ),
    );
}

#[test]
#[ignore = "needs hallway2.pomdp under assets/benchmarks/ (or BSQZ_BENCH_DIR)"]
fn criterion_03_hallway2_rank_vdc_diverges_despite_tiny_error() {
    let model = hallway2();
    let obs_w = model.obs_weighted_transitions().unwrap();
    let beliefs = sample_beliefs(&model, 5000, 11, 250).unwrap();
    let basis = krylov_basis(&model, &obs_w, &VdcConfig::new(VdcMode::LosslessRank)).unwrap();
    let report = error_report(&model, &obs_w, &basis, None).unwrap();
    assert!(
        report.eps_t <= 1e-8,
        "rank-based VDC eps_t = {} above 1e-8",
        report.eps_t
    );
    let compressed = build_compressed(&model, &obs_w, &basis).unwrap();
    let proc = LinearBeliefProcess::from_compressed(&compressed, &beliefs).unwrap();
    let cfg = PerseusConfig {
        max_stages: 500,
        seed: 7,
        value_floor_init: true,
    };
    let (_, trace) = perseus_solve(&proc, None, &cfg).unwrap();
    let verdict = divergence_verdict(&trace);
    assert_eq!(
        verdict,
        Verdict::Diverged,
        "expected divergence, got {verdict}"
    );
    pass(
        "03",
        format!(
            "hallway2 rank VDC: eps_t = {:.2e} yet {verdict}",
            report.eps_t
        ),
    );
}

#[test]
#[ignore = "needs coffee.pomdp under assets/benchmarks/ (or BSQZ_BENCH_DIR)"]
fn criterion_04_coffee_rank_vdc_stops_at_201_columns() {
    let model = load_benchmark("coffee.pomdp");
    let obs_w = model.obs_weighted_transitions().unwrap();
    let basis = krylov_basis(&model, &obs_w, &VdcConfig::new(VdcMode::LosslessRank)).unwrap();
    assert_eq!(
        basis.k(),
        201,
        "expected exactly 201 columns, got {}",
        basis.k()
    );
    let report = error_report(&model, &obs_w, &basis, None).unwrap();
    assert!(
        report.eps_t > 1e-4,
        "expected a significant residual, eps_t = {}",
        report.eps_t
    );
    pass(
        "04",
        format!(
            "coffee rank VDC: 201 columns, eps_t = {:.3e} > 1e-4",
            report.eps_t
        ),
    );
}

#[test]
#[ignore = "needs coffee.pomdp under assets/benchmarks/ (or BSQZ_BENCH_DIR); ~2 h"]
fn criterion_05_coffee_lossy_vdc_k200_reward() {
    let model = load_benchmark("coffee.pomdp");
    let obs_w = model.obs_weighted_transitions().unwrap();
    let beliefs = sample_beliefs(&model, 5000, 11, 250).unwrap();
    let basis = krylov_basis(
        &model,
        &obs_w,
        &VdcConfig::new(VdcMode::LossyGreedy { k: 200 }),
    )
    .unwrap();
    let compressed = build_compressed(&model, &obs_w, &basis).unwrap();
    let proc = LinearBeliefProcess::from_compressed(&compressed, &beliefs).unwrap();
    let cfg = PerseusConfig {
        max_stages: 500,
        seed: 7,
        value_floor_init: true,
    };
    let (vf, _) = perseus_solve(&proc, None, &cfg).unwrap();
    let proto = EvalProtocol {
        n_trajectories: 1000,
        horizon: 251,
        n_repeats: 5,
        seed: 23,
    };
    let result = simulate_policy(&model, &vf, Some(&basis), &proto).unwrap();
    assert!(
        (10.0..=11.5).contains(&result.mean),
        "mean reward {} outside [10.0, 11.5]",
        result.mean
    );
    pass(
        "05",
        format!(
            "coffee lossy VDC k=200: mean reward {:.3} in [10.0, 11.5]",
            result.mean
        ),
    );
}
