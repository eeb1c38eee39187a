//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! root seed, a step counter and a fixed tag, so that adding or removing draws
//! in one component never perturbs another.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type MeamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `(root, step, tag)`.
pub fn derive_seed(root: u64, step: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ step) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(root: u64, step: u64, tag: u64) -> MeamRng {
    MeamRng::seed_from_u64(derive_seed(root, step, tag))
}

pub fn seeded(seed: u64) -> MeamRng {
    MeamRng::seed_from_u64(seed)
}

/// `rows x cols` matrix of independent standard normals.
pub fn randn<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
