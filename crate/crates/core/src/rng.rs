//! Deterministic randomness plumbing.
//!
//! Every stochastic step in the pipeline draws from a stream seeded through
//! [`derive_seed`], so any unit of work (one image, one training run, one
//! attack invocation) can be recomputed in isolation and is independent of
//! scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from a base seed and a list of string labels.
///
/// The derivation hashes the base seed and each label with length framing,
/// so distinct label paths cannot collide by concatenation.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Creates the stream cipher RNG used throughout the pipeline.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw via the Box-Muller transform.
///
/// Consumes exactly two uniforms per call, which keeps streams reproducible
/// across platforms without a rejection loop.
pub fn next_gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
