//! Deterministic seed derivation for ensemble runs.
//!
//! Every network in a campaign gets its own RNG substream derived from the
//! campaign master seed and the network index alone, so results do not
//! depend on worker count or scheduling order. The derivation is the
//! SplitMix64 finalizer applied to `master + (index + 1) * GAMMA`, i.e.
//! network `i` receives the `(i + 1)`-th output of a SplitMix64 generator
//! seeded with the master seed.
//!
//! Stages inside one network (witness restarts per order `k`, subsample
//! decisions) draw further seeds from the substream via [`derive`] with a
//! distinct purpose tag, so adding or skipping a stage never perturbs the
//! randomness of another.

/// SplitMix64 increment (golden-ratio constant).
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Distinct odd constant for purpose-tagged sub-derivation.
const PURPOSE_GAMMA: u64 = 0xD1B5_4A32_D192_ED03;

/// Purpose tag for the per-network subsample decision.
pub const PURPOSE_SUBSAMPLE: u64 = 1;

/// Purpose tag for witness restarts at order `k`: `PURPOSE_TAU_BASE + k`.
pub const PURPOSE_TAU_BASE: u64 = 16;

/// SplitMix64 finalizer. Bijective on `u64`, so distinct inputs map to
/// distinct outputs.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for network `index` in a campaign with the given master seed.
#[inline]
pub fn substream(master_seed: u64, index: u64) -> u64 {
    mix(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Seed for a tagged stage within one network substream.
#[inline]
pub fn derive(stream_seed: u64, purpose: u64) -> u64 {
    mix(stream_seed.wrapping_add(purpose.wrapping_add(1).wrapping_mul(PURPOSE_GAMMA)))
}

/// Uniform double in `[0, 1)` from the top 53 bits of a mixed word.
/// Used for the deterministic per-network subsample decision.
#[inline]
pub fn unit_uniform(seed: u64) -> f64 {
    (mix(seed) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
