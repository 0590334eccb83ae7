use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{Error, Result};

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Xavier/Glorot uniform draw for a `[fan_in, fan_out]` weight, seeded.
pub fn xavier_uniform(shape: &[usize], seed: u64) -> Result<Tensor> {
    xavier_uniform_with(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn xavier_uniform_with<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<Tensor> {
    let &[fan_in, fan_out] = shape else {
        return Err(Error::shape("xavier_uniform", format!("need 2-D shape, got {shape:?}")));
    };
    if fan_in + fan_out == 0 {
        return Err(Error::shape("xavier_uniform", "empty shape"));
    }
    let bound = xavier_bound(fan_in, fan_out);
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::new(shape.to_vec(), data)
}
