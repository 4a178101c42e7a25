//! Training trajectories as time-evolving layered graphs.
//!
//! Per-epoch checkpoints ([`tensorstore`]) become weighted k-partite graphs
//! ([`graphgen`]); node centralities ([`centrality`]) are summarized into
//! temporal signatures ([`signature`]) that feed accuracy predictors
//! ([`predict`]). [`corpus`] trains small synthetic networks to produce
//! checkpoint series, and [`pipeline`] wires the stages together.

pub mod centrality;
pub mod corpus;
pub mod error;
pub mod graphgen;
pub mod pipeline;
pub mod predict;
pub mod signature;
pub mod tensorstore;

pub use error::{Error, Result};

/// Seeded generator used for every random choice in the crate.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
