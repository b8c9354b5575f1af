//! Counter-based stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose 256-bit
//! seed encodes `(root seed, domain, a, b)`. Distinct counters give
//! independent streams, so parallel workers can generate their own
//! randomness without any shared state and results do not depend on
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain separators, one per independent consumer of randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    ParamInit = 1,
    Probes = 2,
    SimSupports = 3,
    SimValues = 4,
    SimMask = 5,
    SimNoise = 6,
}

/// Derives the stream identified by `(root, domain, a, b)`.
pub fn stream(root: u64, domain: Domain, a: u64, b: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&root.to_le_bytes());
    seed[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&a.to_le_bytes());
    seed[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Packs two 32-bit indices into one counter word.
pub fn pack(hi: usize, lo: usize) -> u64 {
    debug_assert!(hi <= u32::MAX as usize && lo <= u32::MAX as usize);
    ((hi as u64) << 32) | lo as u64
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a root seed and a sequence of counters into one derived seed.
pub fn mix(root: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix(root);
    for &p in parts {
        acc = splitmix(acc ^ splitmix(p));
    }
    acc
}
