//! Sparse-network continual learning.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece of
//! the learner: a small define-by-run autodiff engine ([`nd`]), variational
//! sparsity gates ([`vbs`]), the gated two-hidden-layer classifier
//! ([`model`]), the full-experience replay memory with classic and
//! loss-aware reservoir sampling ([`replay`]), the losses and training loops
//! ([`trainer`]) and the pure stream builders ([`datasets`]).
//!
//! File IO, configuration and the command-line runner live in the `sncl`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod datasets;
pub mod error;
pub mod model;
pub mod nd;
pub mod replay;
pub mod trainer;
pub mod vbs;

pub use error::{Error, Result};

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Independent sub-seed number `stream` of `seed` (SplitMix64 finalizer), so
/// data order, initialization and training noise never share a generator.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed streams used by the runners.
pub mod seed_streams {
    pub const DATA: u64 = 0;
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
}
