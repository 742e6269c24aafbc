//! Seeded, splittable random streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha8 stream whose key is a
//! hash of the master seed and a path of stream labels (for example
//! `[snr_index, trial_index]`). Results therefore do not depend on how trials
//! are scheduled across workers.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream labels used when deriving sub-streams from a master seed.
pub mod label {
    pub const CALIBRATION: u64 = 0x6361_6c69;
    pub const TRAINING: u64 = 0x7472_6169;
    pub const TRAINING_DATA: u64 = 0x6461_7461;
    pub const EVALUATION: u64 = 0x6576_616c;
    pub const CERTIFY: u64 = 0x6365_7274;
    pub const INIT: u64 = 0x696e_6974;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream from `master` and a label path.
pub fn stream(master: u64, path: &[u64]) -> SimRng {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17) ^ acc;
        acc = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// A 64-bit seed for a sub-computation that takes a plain seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    stream(master, path).next_u64()
}

/// Circularly-symmetric complex Gaussian sample with `E|z|^2 = variance`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}
