use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, ComplexVector, C64};

/// The generator used for every stochastic operation in the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream from a master seed and a key path, e.g.
/// `(realization, image, draw)`. The result only depends on its arguments,
/// never on scheduling.
pub fn seeded_rng(seed: u64, keys: &[u64]) -> SimRng {
    let mut state = seed;
    let mut mixed = splitmix64(&mut state);
    for &k in keys {
        state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93).wrapping_add(mixed);
        mixed = splitmix64(&mut state);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// One circularly-symmetric complex Gaussian draw with `E|z|² = variance`.
pub fn cn_scalar<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(sd * re, sd * im)
}

/// Matrix with i.i.d. `CN(0, variance)` entries.
pub fn sample_cn<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> ComplexMatrix {
    assert!(variance >= 0.0, "variance must be nonnegative");
    ComplexMatrix::from_fn(rows, cols, |_, _| cn_scalar(variance, rng))
}

pub fn sample_cn_vector<R: Rng + ?Sized>(len: usize, variance: f64, rng: &mut R) -> ComplexVector {
    (0..len).map(|_| cn_scalar(variance, rng)).collect()
}

/// Adds `CN(0, variance)` noise to `v` in place. No draws are consumed when `variance == 0`.
pub fn add_cn_noise<R: Rng + ?Sized>(v: &mut [C64], variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    for z in v {
        *z += cn_scalar(variance, rng);
    }
}
