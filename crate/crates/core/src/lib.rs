//! Desk-scale offline reinforcement learning laboratory.
//!
//! Everything runs on plain `f64` CPU math: a small tape-based autodiff
//! engine ([`graph`]), MLPs and Adam ([`nn`]), toy continuous-control
//! environments with exact dynamic-programming oracles ([`env`]),
//! trajectory datasets ([`data`]), decoupled value learning ([`value`]),
//! policy extraction ([`extract`]), test-time policy improvement
//! ([`testtime`]), measurement instruments ([`diagnostics`]), and the
//! tanh-kernel state representation ([`featurize`]).

pub mod data;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod extract;
pub mod featurize;
pub mod graph;
pub mod nn;
pub mod tensor;
pub mod testtime;
pub mod value;

pub use error::{Error, Result};
pub use tensor::Tensor;

use rand_chacha::rand_core::SeedableRng;

/// Deterministic RNG used throughout the crate. Seeding is always explicit.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
