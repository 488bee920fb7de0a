//! Deterministic derivation of sub-stream seeds.

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `stream` of `base`. Distinct streams give unrelated seeds.
pub fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}
