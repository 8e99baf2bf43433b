//! A desk-scale laboratory for arithmetic dynamics over the rationals:
//! exact heights, dynamical and arithmetic degrees, canonical heights, and
//! the nef-cone machinery of complete simplicial toric varieties.

pub mod error;
pub mod degrees;
pub mod exact;
pub mod linalg;
pub mod maps;
pub mod toric;

pub use error::{Error, Result};

/// Deterministic RNG for every sampling heuristic in the crate.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
