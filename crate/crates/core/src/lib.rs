//! Linear belief compression for POMDPs.
//!
//! The crate covers the full pipeline: parse or synthesise a POMDP, sample
//! reachable beliefs, compress the belief space (value-directed compression
//! or one of three nonnegative-factorisation methods), assemble the reduced
//! model, solve it with a Perseus-style point-based value iteration, evaluate
//! the greedy policy by trajectory simulation, and run convergence and
//! pruning-soundness diagnostics on the compression itself.

pub mod compressed;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod io;
pub mod linalg;
pub mod nmf;
pub mod pomdp;
pub mod rng;
pub mod sampling;
pub mod solver;
pub mod vdc;

pub use compressed::{CompressedBelief, CompressedPomdp, CompressionErrorReport};
pub use error::{Error, Result};
pub use evaluation::{EvalProtocol, EvalResult, Verdict};
pub use nmf::{FactorisationTrace, NmfConfig, NmfVariant};
pub use pomdp::{Belief, ObsWeightedTransitions, Pomdp, ValidationReport};
pub use sampling::{BeliefMatrix, NeighbourhoodGraph};
pub use solver::{AlphaVector, LinearBeliefProcess, PerseusConfig, SolveTrace, ValueFunction};
pub use vdc::{CompressionBasis, CompressionMethod, VdcConfig, VdcMode};
