//! Distributed multi-resource AIMD allocation and its windowed Markov-chain model.
//!
//! The crate is `no_std` (with `alloc`) and split along the lines of the
//! system it models:
//!
//! - [`model`]: configuration, validation and per-agent cost functions.
//! - [`engine`]: the event-driven simulator (additive increase, capacity
//!   events, probabilistic multiplicative back-off, average tracking).
//! - [`matrix`]: AIMD matrices, lifted window matrices, block matrices, the
//!   norms they are non-expansive in, and a randomized property suite.
//! - [`chain`]: the lifted place-dependent chain `ξ(k+1) = U(k) ξ(k)`,
//!   ergodic averages, uniqueness probes and contraction-on-average estimates.
//! - [`oracle`]: the utilitarian optimum by projected gradient descent, KKT
//!   residuals and a brute-force grid search for tiny instances.
//!
//! All randomness is drawn from a caller-supplied [`rand::RngCore`]; the
//! convenience runners seed a [`rand_chacha::ChaCha8Rng`] from the config.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod stats;

pub mod chain;
pub mod engine;
pub mod matrix;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use stats::{mean, RunningMean};

/// The generator used by every seeded runner in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's deterministic generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
