//! Counter-based random streams.
//!
//! Every draw in the simulator is keyed by `(seed, domain, index)`: the seed
//! and domain select a ChaCha key, the index selects the ChaCha stream. Any
//! draw can be regenerated in isolation, so results do not depend on how
//! work is split across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream domains used by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Relay-visible parameters of outer draw `i`.
    RelaySide = 1,
    /// Destination-only parameters drawn conditionally on outer draw `i`.
    DestinationSide = 2,
    /// Ad-hoc streams (tests, standalone calls).
    Auxiliary = 3,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Circularly symmetric complex normal with `E|z|² = variance`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Uniform on `(lo, hi]`; the open lower end keeps path-loss distances
/// strictly positive when `lo = 0`.
pub fn uniform_open_low<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * (1.0 - u)
}
