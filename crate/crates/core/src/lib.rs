//! Genetic-programming engine that evolves tree-structured sorting programs.
//!
//! The engine grows a population of small tree programs (`For`, `IfElse`,
//! `CompareSwap`, `ReverseCompareSwap` nodes) under tournament selection and
//! subtree mutation until a program sorts perfectly, first in ascending order
//! and then in both directions under a direction flag. Alongside the
//! evolutionary runs, a Monte-Carlo sampler estimates how dense working
//! programs are in the space of random programs, conditioned on
//! self-consistent program-length distributions, so that median generation
//! counts G can be combined with densities D into the constancy statistic
//! K = G * sqrt(D).
//!
//! Modules:
//! - [`program`]: the program tree, random generation, subtree mutation.
//! - [`sexpr`]: textual round-trip form for program trees.
//! - [`interp`]: the statement-budgeted interpreter.
//! - [`fitness`]: sortedness metrics and the fitness functions f1, f2, f3.
//! - [`evolution`]: tournament selection, the two-phase protocol, runs.
//! - [`density`]: conditioned sampling and density estimation.
//! - [`experiment`]: suite orchestration, CSV/manifest output, K tables.
//! - [`cli`]: command-line argument parsing for the `sortevo` binary.

pub mod cli;
pub mod density;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod interp;
pub mod program;
pub mod sexpr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed from a master seed and an index (splitmix64 over the
/// master XORed with a golden-ratio multiple of the index). Parallel workers
/// seeded this way produce the same results as a serial loop.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for a derived seed. All randomized code in this crate goes through
/// ChaCha8 streams so runs replay exactly from a master seed.
pub fn rng_for(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}
