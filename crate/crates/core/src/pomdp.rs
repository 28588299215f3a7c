//! Discrete POMDP model, belief dynamics, and a low-rank synthetic fixture.
//!
//! A model is the tuple (states, actions, observations, transition,
//! observation function, reward, discount). Beliefs are probability vectors
//! over states; `belief_update` is the Bayes step
//!
//! ```text
//! b'(s') = Omega(z | s', a) * sum_s T(s' | a, s) b(s) / Pr(z | a, b)
//! ```
//!
//! and the observation-weighted transition maps collapse transition and
//! observation into per-(a, z) matrices `T^{a,z}_{ij} = T(s_j|a,s_i) *
//! Omega(z|a,s_j)`, so that the numerator above is the row vector
//! `b^T T^{a,z}`.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::MaybeSparse;
use crate::rng::rng_for;

/// Row-stochasticity tolerance used everywhere a distribution is validated.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Likelihoods at or below this are treated as impossible observations.
pub const ZERO_LIKELIHOOD: f64 = 1e-300;

/// Maps with fewer than this fraction of non-zeros are stored sparse.
pub const SPARSE_THRESHOLD: f64 = 0.25;

/// Probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: DVector<f64>,
}

impl Belief {
    /// Validates nonnegativity and unit sum (within `STOCHASTIC_TOL`).
    pub fn new(probs: DVector<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("belief of dimension 0".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::Numerical(format!(
                    "belief entry {i} is {p}, expected a finite nonnegative probability"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Numerical(format!(
                "belief sums to {sum}, expected 1 within {STOCHASTIC_TOL}"
            )));
        }
        Ok(Belief { probs })
    }

    /// Renormalises a nonnegative weight vector into a belief.
    pub fn normalised(weights: DVector<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::Numerical(format!(
                "cannot normalise weights with total {sum}"
            )));
        }
        Belief::new(weights / sum)
    }

    pub fn uniform(n: usize) -> Self {
        Belief {
            probs: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    /// Point mass on state `s`.
    pub fn indicator(n: usize, s: usize) -> Self {
        let mut p = DVector::zeros(n);
        p[s] = 1.0;
        Belief { probs: p }
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn as_row(&self) -> RowDVector<f64> {
        self.probs.transpose()
    }
}

/// Discrete POMDP with per-action transition and observation matrices.
///
/// `transition[a]` is |S| x |S| (row = source state, column = successor);
/// `observation[a]` is |S| x |Z| (row = successor state, column =
/// observation); `reward` is |S| x |A|.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    pub transition: Vec<DMatrix<f64>>,
    pub observation: Vec<DMatrix<f64>>,
    pub reward: DMatrix<f64>,
    pub discount: f64,
    pub initial_belief: Belief,
}

/// One violated model invariant, with enough location detail to fix the file
/// or generator that produced it.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionRowSum {
        action: usize,
        state: usize,
        sum: f64,
    },
    TransitionNegative {
        action: usize,
        state: usize,
        col: usize,
        value: f64,
    },
    ObservationRowSum {
        action: usize,
        state: usize,
        sum: f64,
    },
    ObservationNegative {
        action: usize,
        state: usize,
        col: usize,
        value: f64,
    },
    NonFinite {
        matrix: String,
        action: usize,
        row: usize,
        col: usize,
    },
    DiscountRange {
        discount: f64,
    },
    InitialBelief {
        detail: String,
    },
    DimensionMismatch {
        detail: String,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TransitionRowSum { action, state, sum } => write!(
                f,
                "transition row (a={action}, s={state}) sums to {sum}, expected 1"
            ),
            Violation::TransitionNegative {
                action,
                state,
                col,
                value,
            } => write!(
                f,
                "transition entry (a={action}, s={state}, s'={col}) is negative: {value}"
            ),
            Violation::ObservationRowSum { action, state, sum } => write!(
                f,
                "observation row (a={action}, s'={state}) sums to {sum}, expected 1"
            ),
            Violation::ObservationNegative {
                action,
                state,
                col,
                value,
            } => write!(
                f,
                "observation entry (a={action}, s'={state}, z={col}) is negative: {value}"
            ),
            Violation::NonFinite {
                matrix,
                action,
                row,
                col,
            } => write!(f, "{matrix} entry (a={action}, {row}, {col}) is not finite"),
            Violation::DiscountRange { discount } => {
                write!(f, "discount {discount} outside the open interval (0, 1)")
            }
            Violation::InitialBelief { detail } => write!(f, "initial belief: {detail}"),
            Violation::DimensionMismatch { detail } => write!(f, "dimensions: {detail}"),
        }
    }
}

/// Outcome of `Pomdp::validate`: empty iff the model is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "(valid)");
        }
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Observation-weighted transition maps, one per (action, observation).
#[derive(Debug, Clone)]
pub struct ObsWeightedTransitions {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_obs: usize,
    maps: Vec<MaybeSparse>,
}

impl ObsWeightedTransitions {
    pub fn map(&self, action: usize, obs: usize) -> &MaybeSparse {
        &self.maps[action * self.n_obs + obs]
    }

    pub fn iter_for_action(&self, action: usize) -> impl Iterator<Item = &MaybeSparse> {
        self.maps[action * self.n_obs..(action + 1) * self.n_obs].iter()
    }

    pub fn iter_all(&self) -> impl Iterator<Item = ((usize, usize), &MaybeSparse)> {
        let n_obs = self.n_obs;
        self.maps
            .iter()
            .enumerate()
            .map(move |(i, m)| ((i / n_obs, i % n_obs), m))
    }
}

impl Pomdp {
    /// Checks every structural invariant and reports all violations found.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.n_states;

        if self.transition.len() != self.n_actions || self.observation.len() != self.n_actions {
            report.violations.push(Violation::DimensionMismatch {
                detail: format!(
                    "expected {} transition/observation matrices, found {}/{}",
                    self.n_actions,
                    self.transition.len(),
                    self.observation.len()
                ),
            });
            return report;
        }
        if self.reward.nrows() != n || self.reward.ncols() != self.n_actions {
            report.violations.push(Violation::DimensionMismatch {
                detail: format!(
                    "reward is {}x{}, expected {}x{}",
                    self.reward.nrows(),
                    self.reward.ncols(),
                    n,
                    self.n_actions
                ),
            });
        }

        for (a, t) in self.transition.iter().enumerate() {
            if t.nrows() != n || t.ncols() != n {
                report.violations.push(Violation::DimensionMismatch {
                    detail: format!(
                        "transition({a}) is {}x{}, expected {n}x{n}",
                        t.nrows(),
                        t.ncols()
                    ),
                });
                continue;
            }
            for s in 0..n {
                let mut sum = 0.0;
                for sp in 0..n {
                    let v = t[(s, sp)];
                    if !v.is_finite() {
                        report.violations.push(Violation::NonFinite {
                            matrix: "transition".into(),
                            action: a,
                            row: s,
                            col: sp,
                        });
                    } else if v < 0.0 {
                        report.violations.push(Violation::TransitionNegative {
                            action: a,
                            state: s,
                            col: sp,
                            value: v,
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    report.violations.push(Violation::TransitionRowSum {
                        action: a,
                        state: s,
                        sum,
                    });
                }
            }
        }

        for (a, o) in self.observation.iter().enumerate() {
            if o.nrows() != n || o.ncols() != self.n_obs {
                report.violations.push(Violation::DimensionMismatch {
                    detail: format!(
                        "observation({a}) is {}x{}, expected {n}x{}",
                        o.nrows(),
                        o.ncols(),
                        self.n_obs
                    ),
                });
                continue;
            }
            for sp in 0..n {
                let mut sum = 0.0;
                for z in 0..self.n_obs {
                    let v = o[(sp, z)];
                    if !v.is_finite() {
                        report.violations.push(Violation::NonFinite {
                            matrix: "observation".into(),
                            action: a,
                            row: sp,
                            col: z,
                        });
                    } else if v < 0.0 {
                        report.violations.push(Violation::ObservationNegative {
                            action: a,
                            state: sp,
                            col: z,
                            value: v,
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    report.violations.push(Violation::ObservationRowSum {
                        action: a,
                        state: sp,
                        sum,
                    });
                }
            }
        }

        for (idx, &v) in self.reward.iter().enumerate() {
            if !v.is_finite() {
                report.violations.push(Violation::NonFinite {
                    matrix: "reward".into(),
                    action: idx / self.reward.nrows(),
                    row: idx % self.reward.nrows(),
                    col: idx / self.reward.nrows(),
                });
            }
        }

        if !(self.discount > 0.0 && self.discount < 1.0) {
            report.violations.push(Violation::DiscountRange {
                discount: self.discount,
            });
        }

        if self.initial_belief.len() != n {
            report.violations.push(Violation::InitialBelief {
                detail: format!("length {} != |S| = {n}", self.initial_belief.len()),
            });
        } else if let Err(e) = Belief::new(self.initial_belief.probs().clone()) {
            report.violations.push(Violation::InitialBelief {
                detail: e.to_string(),
            });
        }

        report
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Invalid(report))
        }
    }

    /// Precomputes the per-(a, z) maps `T^{a,z}_{ij} = T(s_j|a,s_i) *
    /// Omega(z|a,s_j)`, stored sparse below `SPARSE_THRESHOLD` density.
    pub fn obs_weighted_transitions(&self) -> Result<ObsWeightedTransitions> {
        self.ensure_valid()?;
        let n = self.n_states;
        let mut maps = Vec::with_capacity(self.n_actions * self.n_obs);
        for a in 0..self.n_actions {
            let t = &self.transition[a];
            let o = &self.observation[a];
            for z in 0..self.n_obs {
                let m = DMatrix::from_fn(n, n, |i, j| t[(i, j)] * o[(j, z)]);
                maps.push(MaybeSparse::from_dense(m, SPARSE_THRESHOLD));
            }
        }
        Ok(ObsWeightedTransitions {
            n_states: n,
            n_actions: self.n_actions,
            n_obs: self.n_obs,
            maps,
        })
    }

    /// `Pr(z | a, b) = sum_{s'} Omega(z|s',a) sum_s T(s'|a,s) b(s)`.
    pub fn observation_likelihood(&self, b: &Belief, action: usize, obs: usize) -> f64 {
        let t = &self.transition[action];
        let o = &self.observation[action];
        let mut total = 0.0;
        for sp in 0..self.n_states {
            let oz = o[(sp, obs)];
            if oz == 0.0 {
                continue;
            }
            let mut pred = 0.0;
            for s in 0..self.n_states {
                pred += t[(s, sp)] * b.probs()[s];
            }
            total += oz * pred;
        }
        total
    }

    /// Bayes belief update; fails with `ImpossibleObservation` when
    /// `Pr(z | a, b)` vanishes.
    pub fn belief_update(&self, b: &Belief, action: usize, obs: usize) -> Result<Belief> {
        let t = &self.transition[action];
        let o = &self.observation[action];
        let n = self.n_states;
        let mut weights = DVector::zeros(n);
        for sp in 0..n {
            let oz = o[(sp, obs)];
            if oz == 0.0 {
                continue;
            }
            let mut pred = 0.0;
            for s in 0..n {
                pred += t[(s, sp)] * b.probs()[s];
            }
            weights[sp] = oz * pred;
        }
        let norm: f64 = weights.iter().sum();
        if norm <= ZERO_LIKELIHOOD {
            return Err(Error::ImpossibleObservation { action, obs });
        }
        Belief::new(weights / norm)
    }

    /// Largest absolute immediate reward; `r_max / (1 - eta)` bounds any
    /// discounted value.
    pub fn max_abs_reward(&self) -> f64 {
        crate::linalg::max_abs(&self.reward)
    }
}

/// Builds a valid random POMDP whose reachable belief set (from the uniform
/// initial belief) lies in a k-dimensional nonnegative subspace.
///
/// States are partitioned into k blocks; transition and observation behave
/// identically for all states inside a block, so any block-uniform belief
/// stays block-uniform under the Bayes update.
pub fn synth_lowrank_pomdp(k: usize, n: usize, seed: u64) -> Result<Pomdp> {
    if k == 0 || n == 0 {
        return Err(Error::Config("synth model needs k >= 1 and n >= 1".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "synth model rank k={k} exceeds state count n={n}"
        )));
    }
    let mut rng = rng_for(seed, 0);
    let n_actions = 2;
    let n_obs = (k + 1).min(6);

    // Block membership: near-equal contiguous blocks.
    let mut block_of = vec![0usize; n];
    let mut block_sizes = vec![0usize; k];
    for (s, b) in block_of.iter_mut().enumerate() {
        *b = (s * k) / n;
        block_sizes[*b] += 1;
    }

    // Random k-block macro dynamics.
    let mut macro_t = Vec::with_capacity(n_actions);
    let mut macro_o = Vec::with_capacity(n_actions);
    for _ in 0..n_actions {
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            let mut row: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            for (j, v) in row.into_iter().enumerate() {
                t[(i, j)] = v;
            }
        }
        macro_t.push(t);
        let mut o = DMatrix::zeros(k, n_obs);
        for i in 0..k {
            let mut row: Vec<f64> = (0..n_obs).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
            for (j, v) in row.into_iter().enumerate() {
                o[(i, j)] = v;
            }
        }
        macro_o.push(o);
    }
    let macro_r = DMatrix::from_fn(k, n_actions, |_, _| rng.random::<f64>() * 2.0 - 1.0);

    // Lift to n states: uniform spreading inside target blocks.
    let mut transition = Vec::with_capacity(n_actions);
    let mut observation = Vec::with_capacity(n_actions);
    for a in 0..n_actions {
        let t = DMatrix::from_fn(n, n, |s, sp| {
            macro_t[a][(block_of[s], block_of[sp])] / block_sizes[block_of[sp]] as f64
        });
        let o = DMatrix::from_fn(n, n_obs, |sp, z| macro_o[a][(block_of[sp], z)]);
        transition.push(t);
        observation.push(o);
    }
    let reward = DMatrix::from_fn(n, n_actions, |s, a| macro_r[(block_of[s], a)]);

    let model = Pomdp {
        n_states: n,
        n_actions,
        n_obs,
        transition,
        observation,
        reward,
        discount: 0.8,
        initial_belief: Belief::uniform(n),
    };
    debug_assert!(model.validate().is_valid());
    Ok(model)
}
