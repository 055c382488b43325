use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::real::Real;
use super::tensor::Tensor;

/// splitmix64 step; used everywhere a root seed is split into stream seeds.
pub fn split_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over a name, so every parameter draws from its own stream.
pub fn name_salt(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn rng_for(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(seed, name_salt(name)))
}

/// Fan-in-scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub fn uniform_fan_in<R: Real>(shape: Vec<usize>, fan_in: usize, seed: u64, name: &str) -> Tensor<R> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut rng = rng_for(seed, name);
    Tensor::from_fn(shape, |_| R::from_f64(rng.random_range(-bound..bound)))
}
