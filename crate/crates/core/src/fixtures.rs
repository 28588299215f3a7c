//! Seeded model generators used by tests, benchmarks and the CLI demo paths.

use nalgebra::DMatrix;
use rand::Rng;

use crate::pomdp::{Belief, Pomdp};
use crate::rng::rng_for;

/// Dense random valid POMDP: strictly positive stochastic rows, rewards in
/// [-1, 1], discount 0.9.
pub fn random_pomdp(n_states: usize, n_actions: usize, n_obs: usize, seed: u64) -> Pomdp {
    let mut rng = rng_for(seed, 99);
    let mut stoch_row = |len: usize| -> Vec<f64> {
        let mut row: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.01).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        row
    };
    let mut transition = Vec::new();
    let mut observation = Vec::new();
    for _ in 0..n_actions {
        let mut t = DMatrix::zeros(n_states, n_states);
        for s in 0..n_states {
            for (sp, v) in stoch_row(n_states).into_iter().enumerate() {
                t[(s, sp)] = v;
            }
        }
        transition.push(t);
        let mut o = DMatrix::zeros(n_states, n_obs);
        for s in 0..n_states {
            for (z, v) in stoch_row(n_obs).into_iter().enumerate() {
                o[(s, z)] = v;
            }
        }
        observation.push(o);
    }
    let mut rng2 = rng_for(seed, 100);
    let reward = DMatrix::from_fn(n_states, n_actions, |_, _| rng2.random::<f64>() * 2.0 - 1.0);
    Pomdp {
        n_states,
        n_actions,
        n_obs,
        transition,
        observation,
        reward,
        discount: 0.9,
        initial_belief: Belief::uniform(n_states),
    }
}
