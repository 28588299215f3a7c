//! Shared fixtures for the benchmark targets.

use bsqz_core::fixtures::random_pomdp;
use bsqz_core::pomdp::Pomdp;
use bsqz_core::sampling::{sample_beliefs, BeliefMatrix};

pub fn bench_model() -> Pomdp {
    random_pomdp(40, 4, 8, 42)
}

pub fn bench_beliefs(model: &Pomdp, m: usize) -> BeliefMatrix {
    sample_beliefs(model, m, 7, 50).expect("sampling succeeds")
}
