//! Deterministic, independently keyed noise streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, domain, lane, counter)`. Streams are independent, so adding a
//! pipeline stage or a corpus image never perturbs the noise of the others,
//! and a given key reproduces the same values on every run and platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;
use crate::Scalar;

/// Master seed for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

/// Namespaces that keep unrelated consumers of the same master seed on
/// disjoint streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamDomain {
    Pipeline = 0,
    Autoencoder = 1,
    Corpus = 2,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive the stream for `(seed, domain, lane, counter)`. The pipeline uses
/// `(stage, step)` for the last two; other domains use whatever indexing
/// suits them.
pub fn stream(seed: RngSeed, domain: StreamDomain, lane: u32, counter: u32) -> ChaCha8Rng {
    let mut state = seed.0 ^ (domain as u64).wrapping_mul(0xA24BAED4963EE407);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(((lane as u64) << 32) | counter as u64);
    rng
}

/// Draw `n` i.i.d. standard normals. Sampling happens in `f64` so the value
/// stream is identical (up to rounding) for every scalar type.
pub fn standard_normal_vec<F: Scalar>(rng: &mut impl Rng, n: usize) -> Vec<F> {
    (0..n)
        .map(|_| F::from_f64_lossy(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

pub fn standard_normal_tensor<F: Scalar>(
    height: usize,
    width: usize,
    channels: usize,
    rng: &mut impl Rng,
) -> Tensor<F> {
    let data = standard_normal_vec(rng, height * width * channels);
    Tensor::from_vec_unchecked(height, width, channels, data)
}
