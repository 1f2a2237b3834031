//! Reproducible per-trajectory random streams.
//!
//! Stream derivation, fixed bit-exactly: the ChaCha8 seed for trajectory
//! k under master seed s is the full 32-byte SHA-256 digest of the
//! 16-byte message `s.to_le_bytes() || k.to_le_bytes()`. Trajectories
//! therefore own statistically independent streams that do not depend on
//! scheduling, worker count, or execution order, and any single
//! trajectory can be replayed in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives the deterministic random stream for one trajectory.
pub fn trajectory_rng(master_seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(trajectory_index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
