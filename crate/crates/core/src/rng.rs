//! Deterministic randomness: every consumer of entropy derives its own named
//! ChaCha8 stream from the master seed, so pipeline stages can be rerun or
//! resumed independently without replaying each other's draws. A stream is
//! identified by (master seed, tag, index) — the index distinguishes
//! per-epoch or per-k instances of the same tag.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Element, Tensor};

/// splitmix64 step — the standard 64-bit mixer, used to expand a seed word
/// into stream key material.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes; cheap, stable, collision-safe for the handful
/// of tags we use.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// 32-byte ChaCha seed for (master, tag, index).
pub fn derive_seed(master: u64, tag: &str, index: u64) -> [u8; 32] {
    let mut state = master ^ fnv1a64(tag.as_bytes()) ^ index.wrapping_mul(0xA24B_AED4_963E_E407);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    seed
}

/// The stream named `tag` (index 0).
pub fn stream(master: u64, tag: &str) -> ChaCha8Rng {
    stream_at(master, tag, 0)
}

/// The `index`-th instance of the stream named `tag` (per-epoch streams etc.).
pub fn stream_at(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, tag, index))
}

/// One standard-normal draw. Sampled at f64 and narrowed, so an f32 model and
/// its f64 validation twin see identical values.
pub fn standard_normal<T: Element>(rng: &mut impl Rng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::from_f64(z)
}

/// Tensor of N(mean, std²) draws in row-major order.
pub fn normal_tensor<T: Element>(
    rng: &mut impl Rng,
    shape: &[usize],
    mean: f64,
    std: f64,
) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let z: f64 = rng.sample(StandardNormal);
        T::from_f64(z * std + mean)
    })
}
