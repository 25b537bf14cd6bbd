//! Concrete random perturbation of the utilities.
//!
//! Each positive utility becomes `U * (1 + sigma * k / 2^20)` where the `k` are
//! distinct integers drawn without replacement from `1..2^20`. The draw is a
//! pure function of the seed.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::instance::{compute_stats, MarketInstance};
use crate::rational::{self, frac, int, Rational};

pub const EPSILON_BITS: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    #[serde(with = "rational::serde_str")]
    pub magnitude: Rational,
    pub seed: u64,
    pub max_retries: u32,
}

impl PerturbationConfig {
    /// `sigma = min(1/10^6, 1/(4 n m u_max))`.
    pub fn default_for(inst: &MarketInstance, seed: u64) -> Self {
        Self {
            magnitude: default_magnitude(inst),
            seed,
            max_retries: 5,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

pub fn default_magnitude(inst: &MarketInstance) -> Rational {
    let bound = sigma_bound(inst) / int(2);
    let cap = frac(1, 1_000_000);
    if bound < cap {
        bound
    } else {
        cap
    }
}

/// Exclusive upper bound `1/(2 n m u_max)` on the magnitude.
pub fn sigma_bound(inst: &MarketInstance) -> Rational {
    let s = compute_stats(inst);
    (int(2) * int(s.n as i64) * int(s.m as i64) * s.u_max).recip()
}

/// Seed used for retry number `attempt`; attempt 0 uses the configured seed.
pub fn attempt_seed(seed: u64, attempt: u32) -> u64 {
    seed.wrapping_add(u64::from(attempt).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The offsets `k_ij` (one per edge, in edge order), all distinct.
pub fn draw_offsets(edges: usize, seed: u64) -> Vec<u64> {
    let range = (1usize << EPSILON_BITS) - 1;
    assert!(edges <= range, "too many edges to perturb distinctly");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, range, edges)
        .into_iter()
        .map(|k| k as u64 + 1)
        .collect()
}

pub fn perturb(inst: &MarketInstance, cfg: &PerturbationConfig) -> Result<MarketInstance> {
    let sigma = &cfg.magnitude;
    if sigma.is_negative() || sigma >= &sigma_bound(inst) {
        return Err(SolverError::Perturbation(format!(
            "magnitude {} outside [0, {})",
            rational::format(sigma),
            rational::format(&sigma_bound(inst))
        )));
    }
    if sigma.is_zero() {
        return Ok(inst.clone());
    }
    let scale = Rational::from_integer(BigInt::one() << EPSILON_BITS);
    let utilities = draw_offsets(inst.num_edges(), cfg.seed)
        .into_iter()
        .zip(inst.edges())
        .map(|(k, e)| {
            let eps = Rational::from_integer(BigInt::from(k)) / &scale;
            &e.utility * (Rational::one() + sigma * eps)
        })
        .collect();
    Ok(inst.with_utilities(utilities))
}
