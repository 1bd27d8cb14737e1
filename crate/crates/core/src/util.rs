//! Small shared helpers.

/// Derive an independent child seed from a base seed and a stream tag.
///
/// SplitMix64 finalizer over the combined words; cheap, stateless, and
/// stable across platforms, so every consumer (restarts, replicates,
/// per-block clusterings) gets a reproducible stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream)
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Format a float with 17 significant decimal digits, enough to round-trip
/// any f64 exactly; used for all numeric CSV output so determinism is
/// byte-testable.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
