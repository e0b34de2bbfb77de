//! Counter-based random streams.
//!
//! A 64-bit seed is expanded into a ChaCha8 key; the replicate (or row)
//! index selects the ChaCha stream, and the block counter walks within it.
//! Every replicate is therefore a pure function of `(seed, index)`, no
//! matter which worker thread evaluates it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `index` under key `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Child seed for a labelled sub-experiment (e.g. the inner bootstrap of
/// outer replicate `r`).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut s = label ^ 0xD6E8_FEB8_6659_FD93;
    let salt = splitmix64(&mut s);
    let mut t = seed ^ salt;
    splitmix64(&mut t)
}
