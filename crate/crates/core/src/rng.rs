//! Seed handling. Every stage derives its generator from one root seed and a
//! fixed label, so runs are reproducible and stages stay independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type HapRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> HapRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a sub-seed from `root` and a stage label (FNV-1a over the label,
/// mixed with splitmix64).
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(root ^ h)
}

pub fn stage_rng(root: u64, label: &str) -> HapRng {
    rng_from_seed(derive_seed(root, label))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
