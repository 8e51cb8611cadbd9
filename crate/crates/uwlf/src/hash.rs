//! Counter-based pseudo-random numbers.
//!
//! Procedural textures and sensor noise draw every value from a hash of
//! `(seed, counters...)`, so results never depend on evaluation order or on
//! how work is split across threads.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed together with a list of counters.
#[inline]
pub fn hash(seed: u64, counters: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for &c in counters {
        h = mix64(h ^ c.wrapping_add(GOLDEN).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

/// Uniform value in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn unit(seed: u64, counters: &[u64]) -> f64 {
    (hash(seed, counters) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal deviate via Box-Muller on two hashed uniforms.
#[inline]
pub fn gaussian(seed: u64, counter: u64) -> f64 {
    let u1 = 1.0 - unit(seed, &[counter, 0]); // (0, 1]
    let u2 = unit(seed, &[counter, 1]);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
