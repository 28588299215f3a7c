//! Policy-quality measurement by trajectory simulation, and divergence
//! verdicts over solver traces.
//!
//! Simulation always tracks the belief in the original space by the Bayes
//! update; with a compression basis present, action selection compresses the
//! tracked belief first. Hidden states, successors and observations are
//! drawn from the true dynamics, so a zero-likelihood observation cannot
//! occur; a defensive reset to the initial belief exists anyway.

use rayon::prelude::*;
use serde::Serialize;

use crate::compressed::compress_belief;
use crate::error::{Error, Result};
use crate::pomdp::Pomdp;
use crate::rng::{derive_seed, rng_for, sample_categorical};
use crate::solver::{greedy_action, SolveTrace, StopReason, ValueFunction};
use crate::vdc::CompressionBasis;

/// Repetition/trajectory counts for an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalProtocol {
    pub n_trajectories: usize,
    pub horizon: usize,
    pub n_repeats: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            n_trajectories: 1000,
            horizon: 251,
            n_repeats: 5,
            seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 || self.horizon == 0 || self.n_repeats == 0 {
            return Err(Error::Config(
                "trajectories, horizon and repeats must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean discounted reward and its spread across repeats.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub mean: f64,
    /// Sample standard deviation across the per-repeat averages.
    pub std: f64,
    pub per_repeat: Vec<f64>,
    pub discounted: bool,
}

fn one_trajectory(
    model: &Pomdp,
    gamma: &ValueFunction,
    basis: Option<&CompressionBasis>,
    horizon: usize,
    seed: u64,
) -> f64 {
    let mut rng = rng_for(seed, 0);
    let mut belief = model.initial_belief.clone();
    let b0: Vec<f64> = belief.probs().iter().copied().collect();
    let mut state = sample_categorical(&mut rng, &b0);
    let mut total = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        let action = match basis {
            Some(basis) => {
                let cb = compress_belief(basis, &belief).expect("basis/model dims agree");
                greedy_action(gamma, cb.coords())
            }
            None => greedy_action(gamma, belief.probs()),
        };
        total += disc * model.reward[(state, action)];
        disc *= model.discount;

        let t_row: Vec<f64> = (0..model.n_states)
            .map(|sp| model.transition[action][(state, sp)])
            .collect();
        let next = sample_categorical(&mut rng, &t_row);
        let o_row: Vec<f64> = (0..model.n_obs)
            .map(|z| model.observation[action][(next, z)])
            .collect();
        let z = sample_categorical(&mut rng, &o_row);
        state = next;
        belief = match model.belief_update(&belief, action, z) {
            Ok(b) => b,
            // Unreachable when z comes from the true dynamics; reset rather
            // than corrupt the run.
            Err(_) => model.initial_belief.clone(),
        };
    }
    total
}

/// Samples `n_trajectories x n_repeats` discounted returns under the greedy
/// policy of `gamma`; deterministic in the protocol seed and independent of
/// worker-thread count.
pub fn simulate_policy(
    model: &Pomdp,
    gamma: &ValueFunction,
    basis: Option<&CompressionBasis>,
    proto: &EvalProtocol,
) -> Result<EvalResult> {
    proto.validate()?;
    let expect_dim = match basis {
        Some(b) => {
            if b.n() != model.n_states {
                return Err(Error::Dim(format!(
                    "basis has {} rows, model has {} states",
                    b.n(),
                    model.n_states
                )));
            }
            b.k()
        }
        None => model.n_states,
    };
    if gamma.dim() != expect_dim {
        return Err(Error::Dim(format!(
            "value function dimension {} does not match expected {}",
            gamma.dim(),
            expect_dim
        )));
    }

    let mut per_repeat = Vec::with_capacity(proto.n_repeats);
    for rep in 0..proto.n_repeats {
        let rep_seed = derive_seed(proto.seed, rep as u64);
        let returns: Vec<f64> = (0..proto.n_trajectories)
            .into_par_iter()
            .map(|t| {
                one_trajectory(
                    model,
                    gamma,
                    basis,
                    proto.horizon,
                    derive_seed(rep_seed, t as u64),
                )
            })
            .collect();
        per_repeat.push(returns.iter().sum::<f64>() / returns.len() as f64);
    }
    let mean = per_repeat.iter().sum::<f64>() / per_repeat.len() as f64;
    let std = if per_repeat.len() > 1 {
        let var = per_repeat.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
            / (per_repeat.len() - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Ok(EvalResult {
        mean,
        std,
        per_repeat,
        discounted: true,
    })
}

/// Outcome classification of a solve trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Converged,
    Plateaued,
    Diverged,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Converged => "converged",
            Verdict::Plateaued => "plateaued",
            Verdict::Diverged => "diverged",
        };
        write!(f, "{s}")
    }
}

/// Diverged iff the guard fired or the expected-value trace escaped the
/// `max|R|/(1-eta) * |points|` ceiling; otherwise converged or plateaued by
/// the stop reason.
pub fn divergence_verdict(trace: &SolveTrace) -> Verdict {
    let ceiling = trace.value_ceiling * trace.n_points as f64;
    let escaped = trace
        .stage_sums
        .iter()
        .any(|s| s.abs() > ceiling * (1.0 + 1e-9));
    if trace.diverged || trace.stop == StopReason::DivergenceGuard || escaped {
        Verdict::Diverged
    } else if trace.stop == StopReason::Converged {
        Verdict::Converged
    } else {
        Verdict::Plateaued
    }
}
