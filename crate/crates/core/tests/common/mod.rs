#![allow(dead_code)]

use arctic_core::instance::{random_instance, split_nodes};
use arctic_core::MarketInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` random integral instances with `2 <= n <= max_n` and at most
/// `max_m` edges, data in `1..=10`.
pub fn suite(seed: u64, count: usize, max_n: usize, max_m: usize) -> Vec<MarketInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=max_n);
            let (b, g) = split_nodes(n);
            let lo = b.max(g).max(n - 1);
            let hi = max_m.min(b * g).max(lo);
            let m = rng.random_range(lo..=hi);
            random_instance(&mut rng, b, g, m, 10)
        })
        .collect()
}
