//! Seed derivation. One global seed fans out to per-stage and per-unit
//! seeds through a fixed integer mix, so stages stay independent while the
//! whole run remains reproducible from a single number.

/// SplitMix64 finalizer; full-period bijection on u64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named pipeline stage ("indicators", "train/rocof", ...).
pub fn stage_seed(global_seed: u64, stage: &str) -> u64 {
    let mut h = splitmix64(global_seed);
    for &b in stage.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// Seed for the k-th unit of work under a parent seed (CV fold, grid point).
pub fn unit_seed(parent: u64, k: u64) -> u64 {
    splitmix64(parent ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
