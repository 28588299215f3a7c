//! Point-based value iteration over a generic linear belief process.
//!
//! The same solver serves the original POMDP (points are beliefs, maps are
//! the observation-weighted transitions) and a compressed one (points are
//! compressed beliefs, maps are the reduced `T~^{a,z}`): a backup at point x
//! is
//!
//! ```text
//! alpha^a = R_{.,a} + eta * sum_z M^{a,z} argmax_{alpha in Gamma} (x^T M^{a,z}) alpha
//! ```
//!
//! returning the `alpha^a` maximising `x^T alpha^a`. `perseus_solve` visits
//! points in seeded-shuffle order and backs up only points whose value has
//! not yet improved in the current stage; `solve_synchronous` backs up every
//! point every stage and is the reference for contraction diagnostics.
//!
//! Ties (argmax over vectors or actions) always break toward the lowest
//! index, which keeps runs reproducible.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::compressed::{compress_belief, CompressedPomdp};
use crate::error::{Error, Result};
use crate::linalg::MaybeSparse;
use crate::pomdp::{ObsWeightedTransitions, Pomdp};
use crate::rng::rng_for;
use crate::sampling::BeliefMatrix;

/// Linear functional over process points, tagged with its greedy action.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub values: DVector<f64>,
    pub action: usize,
}

/// Which coordinate space a value function lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpaceTag {
    Original,
    Compressed { basis_id: u64 },
}

/// Piecewise-linear value function `V(x) = max_alpha x^T alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub vectors: Vec<AlphaVector>,
    pub space: SpaceTag,
}

impl ValueFunction {
    pub fn new(vectors: Vec<AlphaVector>, space: SpaceTag) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyInput("value function with no vectors".into()));
        }
        Ok(ValueFunction { vectors, space })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].values.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.vectors
            .iter()
            .map(|a| x.dot(&a.values))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the maximising vector, lowest index on ties.
    pub fn best_index(&self, x: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut best_v = x.dot(&self.vectors[0].values);
        for (i, a) in self.vectors.iter().enumerate().skip(1) {
            let v = x.dot(&a.values);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }
}

/// Action of the maximising alpha-vector at `x`, ties to the lowest action
/// index via the vector order.
pub fn greedy_action(vf: &ValueFunction, x: &DVector<f64>) -> usize {
    vf.vectors[vf.best_index(x)].action
}

/// A belief-like process the solver understands: points, a reward matrix,
/// per-(action, observation) linear maps and a discount.
#[derive(Debug, Clone)]
pub struct LinearBeliefProcess {
    pub dim: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub points: Vec<DVector<f64>>,
    pub reward: DMatrix<f64>,
    maps: Vec<MaybeSparse>,
    pub discount: f64,
    pub space: SpaceTag,
    /// Domination pruning is sound for original beliefs and for compressed
    /// spaces with a nonnegative basis.
    pub pruning_sound: bool,
}

impl LinearBeliefProcess {
    /// Assembles a process from explicit parts; maps are indexed
    /// `action * n_obs + obs`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        n_actions: usize,
        n_obs: usize,
        points: Vec<DVector<f64>>,
        reward: DMatrix<f64>,
        maps: Vec<MaybeSparse>,
        discount: f64,
        space: SpaceTag,
        pruning_sound: bool,
    ) -> Result<Self> {
        if maps.len() != n_actions * n_obs {
            return Err(Error::Dim(format!(
                "expected {} maps, got {}",
                n_actions * n_obs,
                maps.len()
            )));
        }
        if reward.nrows() != dim || reward.ncols() != n_actions {
            return Err(Error::Dim(format!(
                "reward is {}x{}, expected {dim}x{n_actions}",
                reward.nrows(),
                reward.ncols()
            )));
        }
        Ok(LinearBeliefProcess {
            dim,
            n_actions,
            n_obs,
            points,
            reward,
            maps,
            discount,
            space,
            pruning_sound,
        })
    }

    /// Original-space process over the sampled beliefs.
    pub fn from_pomdp(
        model: &Pomdp,
        obs_w: &ObsWeightedTransitions,
        beliefs: &BeliefMatrix,
    ) -> Self {
        let points = (0..beliefs.len()).map(|j| beliefs.column(j)).collect();
        Self::from_pomdp_points(model, obs_w, points)
    }

    /// Original-space process over explicit points.
    pub fn from_pomdp_points(
        model: &Pomdp,
        obs_w: &ObsWeightedTransitions,
        points: Vec<DVector<f64>>,
    ) -> Self {
        LinearBeliefProcess {
            dim: model.n_states,
            n_actions: model.n_actions,
            n_obs: model.n_obs,
            points,
            reward: model.reward.clone(),
            maps: obs_w.iter_all().map(|(_, m)| m.clone()).collect(),
            discount: model.discount,
            space: SpaceTag::Original,
            pruning_sound: true,
        }
    }

    /// Compressed-space process: the sampled beliefs are compressed through
    /// the basis and the reduced reward/maps are used as-is.
    pub fn from_compressed(c: &CompressedPomdp, beliefs: &BeliefMatrix) -> Result<Self> {
        let points = (0..beliefs.len())
            .map(|j| compress_belief(&c.basis, &beliefs.belief(j)).map(|cb| cb.coords().clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearBeliefProcess {
            dim: c.k,
            n_actions: c.n_actions,
            n_obs: c.n_obs,
            points,
            reward: c.r_tilde.clone(),
            maps: c
                .t_tilde
                .iter()
                .map(|m| MaybeSparse::Dense(m.clone()))
                .collect(),
            discount: c.discount,
            space: SpaceTag::Compressed {
                basis_id: c.basis.id(),
            },
            pruning_sound: c.basis.nonnegative,
        })
    }

    pub fn map(&self, action: usize, obs: usize) -> &MaybeSparse {
        &self.maps[action * self.n_obs + obs]
    }

    /// `max |R| / (1 - eta)` for this process's reward matrix; any point
    /// value of a contractive recursion stays within it.
    pub fn value_ceiling(&self) -> f64 {
        crate::linalg::max_abs(&self.reward) / (1.0 - self.discount)
    }

    /// Lower-bound start: single vector with every entry
    /// `min_{s,a} R(s,a) / (1 - eta)`.
    pub fn floor_value_function(&self) -> ValueFunction {
        let r_min = self.reward.iter().fold(f64::INFINITY, |a, &v| a.min(v));
        let fill = r_min / (1.0 - self.discount);
        ValueFunction {
            vectors: vec![AlphaVector {
                values: DVector::from_element(self.dim, fill),
                action: 0,
            }],
            space: self.space,
        }
    }
}

/// Exact one-point Bellman backup against the current vector set.
pub fn point_backup(
    proc: &LinearBeliefProcess,
    gamma: &ValueFunction,
    x: &DVector<f64>,
) -> AlphaVector {
    debug_assert!(!gamma.vectors.is_empty());
    let row: RowDVector<f64> = x.transpose();
    let mut best: Option<(f64, AlphaVector)> = None;
    for a in 0..proc.n_actions {
        let mut alpha = proc.reward.column(a).into_owned();
        for z in 0..proc.n_obs {
            let map = proc.map(a, z);
            let succ = map.row_mul(&row);
            let succ_col = succ.transpose();
            let mut pick = 0;
            let mut pick_v = succ_col.dot(&gamma.vectors[0].values);
            for (i, g) in gamma.vectors.iter().enumerate().skip(1) {
                let v = succ_col.dot(&g.values);
                if v > pick_v {
                    pick_v = v;
                    pick = i;
                }
            }
            let propagated = map.mat_vec(&gamma.vectors[pick].values);
            alpha.axpy(proc.discount, &propagated, 1.0);
        }
        let val = x.dot(&alpha);
        match &best {
            Some((bv, _)) if *bv >= val => {}
            _ => {
                best = Some((
                    val,
                    AlphaVector {
                        values: alpha,
                        action: a,
                    },
                ))
            }
        }
    }
    best.expect("at least one action").1
}

/// Removes exact duplicates and vectors pointwise-dominated by a single
/// other vector. Sound for original beliefs; in a compressed space this is
/// only sound when the basis is nonnegative (the process records that).
pub fn prune(vf: &ValueFunction) -> ValueFunction {
    let mut kept: Vec<AlphaVector> = Vec::with_capacity(vf.vectors.len());
    for cand in &vf.vectors {
        if kept.iter().any(|k| k.values == cand.values) {
            continue;
        }
        kept.push(cand.clone());
    }
    let dominated: Vec<bool> = kept
        .iter()
        .enumerate()
        .map(|(i, a)| {
            kept.iter().enumerate().any(|(j, b)| {
                if i == j {
                    return false;
                }
                let dominates = a
                    .values
                    .iter()
                    .zip(b.values.iter())
                    .all(|(&ai, &bi)| ai <= bi);
                // Strictly dominated or an earlier equal-valued twin wins.
                dominates && (a.values != b.values || j < i)
            })
        })
        .collect();
    let vectors: Vec<AlphaVector> = kept
        .into_iter()
        .zip(dominated)
        .filter_map(|(a, d)| if d { None } else { Some(a) })
        .collect();
    ValueFunction {
        vectors,
        space: vf.space,
    }
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    /// Max point-value change fell below the convergence threshold.
    Converged,
    MaxStages,
    /// A point value escaped `divergence_factor * max|R|/(1-eta)`.
    DivergenceGuard,
}

/// Per-stage record of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveTrace {
    /// `sum_x V(x)` after each stage (index 0 is the initial set).
    pub stage_sums: Vec<f64>,
    /// `max_x |V_t(x) - V_{t-1}(x)|` per stage.
    pub stage_max_change: Vec<f64>,
    pub gamma_sizes: Vec<usize>,
    pub wall_times_s: Vec<f64>,
    pub stop: StopReason,
    pub diverged: bool,
    /// Per-point analytic ceiling `max|R| / (1 - eta)`.
    pub value_ceiling: f64,
    pub n_points: usize,
    /// The lower-bound initial vector is a heuristic in compressed spaces.
    pub floor_init_heuristic: bool,
}

/// Solver options; the convergence threshold of `1e-4` on the max point-value
/// change and the 10x divergence guard are fixed conventions.
#[derive(Debug, Clone, Copy)]
pub struct PerseusConfig {
    pub max_stages: usize,
    pub seed: u64,
    pub value_floor_init: bool,
}

impl Default for PerseusConfig {
    fn default() -> Self {
        PerseusConfig {
            max_stages: 500,
            seed: 0,
            value_floor_init: true,
        }
    }
}

pub const CONVERGENCE_TOL: f64 = 1e-4;
pub const DIVERGENCE_FACTOR: f64 = 10.0;

fn initial_gamma(
    proc: &LinearBeliefProcess,
    init: Option<&ValueFunction>,
    cfg: &PerseusConfig,
) -> ValueFunction {
    match init {
        Some(vf) => vf.clone(),
        None if cfg.value_floor_init => proc.floor_value_function(),
        None => ValueFunction {
            vectors: vec![AlphaVector {
                values: DVector::zeros(proc.dim),
                action: 0,
            }],
            space: proc.space,
        },
    }
}

fn point_values(gamma: &ValueFunction, points: &[DVector<f64>]) -> Vec<f64> {
    points.iter().map(|x| gamma.value(x)).collect()
}

/// Randomized point-based value iteration (Perseus schedule).
pub fn perseus_solve(
    proc: &LinearBeliefProcess,
    init: Option<&ValueFunction>,
    cfg: &PerseusConfig,
) -> Result<(ValueFunction, SolveTrace)> {
    if proc.points.is_empty() {
        return Err(Error::EmptyInput("process has no points".into()));
    }
    let mut gamma = initial_gamma(proc, init, cfg);
    if gamma.dim() != proc.dim {
        return Err(Error::Dim(format!(
            "initial vectors have dimension {}, process has {}",
            gamma.dim(),
            proc.dim
        )));
    }
    let m = proc.points.len();
    let ceiling = proc.value_ceiling();
    let guard = DIVERGENCE_FACTOR * ceiling.max(f64::MIN_POSITIVE);
    let heuristic_floor =
        init.is_none() && cfg.value_floor_init && proc.space != SpaceTag::Original;

    let mut values = point_values(&gamma, &proc.points);
    let mut trace = SolveTrace {
        stage_sums: vec![values.iter().sum()],
        stage_max_change: Vec::new(),
        gamma_sizes: vec![gamma.vectors.len()],
        wall_times_s: Vec::new(),
        stop: StopReason::MaxStages,
        diverged: false,
        value_ceiling: ceiling,
        n_points: m,
        floor_init_heuristic: heuristic_floor,
    };

    for stage in 0..cfg.max_stages {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..m).collect();
        let mut rng = rng_for(cfg.seed, stage as u64);
        // Fisher-Yates with the stage-derived stream.
        for i in (1..m).rev() {
            let j = rand::Rng::random_range(&mut rng, 0..=i);
            order.swap(i, j);
        }

        let mut improved = vec![false; m];
        let mut new_vectors: Vec<AlphaVector> = Vec::new();
        for &idx in &order {
            if improved[idx] {
                continue;
            }
            let x = &proc.points[idx];
            let backed = point_backup(proc, &gamma, x);
            let v_new = x.dot(&backed.values);
            let chosen = if v_new >= values[idx] {
                backed
            } else {
                gamma.vectors[gamma.best_index(x)].clone()
            };
            for (j, flag) in improved.iter_mut().enumerate() {
                if !*flag && proc.points[j].dot(&chosen.values) >= values[j] {
                    *flag = true;
                }
            }
            if !new_vectors.iter().any(|v| v.values == chosen.values) {
                new_vectors.push(chosen);
            }
        }

        gamma = prune(&ValueFunction {
            vectors: new_vectors,
            space: proc.space,
        });
        let new_values = point_values(&gamma, &proc.points);
        let max_change = new_values
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        values = new_values;

        trace.stage_sums.push(values.iter().sum());
        trace.stage_max_change.push(max_change);
        trace.gamma_sizes.push(gamma.vectors.len());
        trace.wall_times_s.push(t0.elapsed().as_secs_f64());

        let peak = values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        if peak > guard {
            trace.stop = StopReason::DivergenceGuard;
            trace.diverged = true;
            return Ok((gamma, trace));
        }
        if max_change < CONVERGENCE_TOL {
            trace.stop = StopReason::Converged;
            return Ok((gamma, trace));
        }
    }
    trace.stop = StopReason::MaxStages;
    Ok((gamma, trace))
}

/// Full-sweep value iteration: every stage backs up every point. Slower than
/// the Perseus schedule but the right operator for contraction and bound
/// diagnostics.
pub fn solve_synchronous(
    proc: &LinearBeliefProcess,
    init: Option<&ValueFunction>,
    max_stages: usize,
    tol: f64,
) -> Result<(ValueFunction, SolveTrace)> {
    if proc.points.is_empty() {
        return Err(Error::EmptyInput("process has no points".into()));
    }
    let cfg = PerseusConfig::default();
    let mut gamma = initial_gamma(proc, init, &cfg);
    let m = proc.points.len();
    let ceiling = proc.value_ceiling();
    let guard = DIVERGENCE_FACTOR * ceiling.max(f64::MIN_POSITIVE);

    let mut values = point_values(&gamma, &proc.points);
    let mut trace = SolveTrace {
        stage_sums: vec![values.iter().sum()],
        stage_max_change: Vec::new(),
        gamma_sizes: vec![gamma.vectors.len()],
        wall_times_s: Vec::new(),
        stop: StopReason::MaxStages,
        diverged: false,
        value_ceiling: ceiling,
        n_points: m,
        floor_init_heuristic: init.is_none()
            && cfg.value_floor_init
            && proc.space != SpaceTag::Original,
    };

    for _ in 0..max_stages {
        let t0 = Instant::now();
        let mut new_vectors: Vec<AlphaVector> = Vec::with_capacity(m);
        for x in &proc.points {
            let backed = point_backup(proc, &gamma, x);
            if !new_vectors.iter().any(|v| v.values == backed.values) {
                new_vectors.push(backed);
            }
        }
        gamma = prune(&ValueFunction {
            vectors: new_vectors,
            space: proc.space,
        });
        let new_values = point_values(&gamma, &proc.points);
        let max_change = new_values
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        values = new_values;

        trace.stage_sums.push(values.iter().sum());
        trace.stage_max_change.push(max_change);
        trace.gamma_sizes.push(gamma.vectors.len());
        trace.wall_times_s.push(t0.elapsed().as_secs_f64());

        let peak = values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        if peak > guard {
            trace.stop = StopReason::DivergenceGuard;
            trace.diverged = true;
            return Ok((gamma, trace));
        }
        if max_change < tol {
            trace.stop = StopReason::Converged;
            return Ok((gamma, trace));
        }
    }
    trace.stop = StopReason::MaxStages;
    Ok((gamma, trace))
}
