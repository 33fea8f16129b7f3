//! Seed derivation shared by every randomized component.
//!
//! A run has one 64-bit seed; each consumer gets `seed ^ role ^ index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ROLE_SOURCE: u64 = 0x5eed_0000_0000_0001;
pub const ROLE_CODEBOOK: u64 = 0x5eed_0000_0000_0002;
pub const ROLE_BINNING: u64 = 0x5eed_0000_0000_0003;
pub const ROLE_ENCODER: u64 = 0x5eed_0000_0000_0004;
pub const ROLE_FIRST_BLOCK: u64 = 0x5eed_0000_0000_0005;
pub const ROLE_TRIAL: u64 = 0x5eed_0000_0000_0006;
pub const ROLE_RESTART: u64 = 0x5eed_0000_0000_0007;
pub const ROLE_USEARCH: u64 = 0x5eed_0000_0000_0008;

pub fn derive_seed(seed: u64, role: u64, index: u64) -> u64 {
    seed ^ role ^ index
}

pub fn rng_for(seed: u64, role: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, role, index))
}
