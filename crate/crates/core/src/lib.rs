//! Training-free evaluation of untrained networks through sample-wise
//! activation patterns.
//!
//! * [`netgraph`]: architecture spaces, genome strings, mutation and crossover.
//! * [`engine`]: deterministic initialisation, forward passes with sign-level
//!   activation capture, parameter/FLOP/site counting.
//! * [`swap`]: pattern-set scores, size regularisation, score reports.
//! * [`search`]: steady-state evolutionary search driven by the regularised score.
//! * [`harness`]: rank correlation, ground-truth tables, ablations and
//!   brute-force verification.

pub mod engine;
pub mod harness;
pub mod netgraph;
pub mod rng;
pub mod search;
pub mod swap;

pub use engine::{instantiate, ActivationRecord, InputBatch, NetworkInstance};
pub use netgraph::{decode, encode, Genome, SpaceId};
pub use swap::{score_all, swap_score, RegularisationParams, ScoreReport};
