//! Text-aware collaborative filtering for implicit feedback.
//!
//! Item latent vectors are produced by trainable text encoders (a word
//! embedding average or a two-layer bidirectional GRU) plus an item-specific
//! offset, and can be trained jointly against item-tag prediction. Forward
//! passes, gradients and the optimizer are all implemented here by hand.

pub mod encoder;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod params;
pub mod recmodel;
pub mod saliency;
pub mod tensor;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};

/// Seeded random number generator used for every stochastic step.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Build a [`SeededRng`] from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}
