//! Keyed, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose seed is derived by
//! SHA-256 from the identifying parts of the work item (master seed, frame id, family,
//! severity, ...). Work items therefore never share state, and results do not depend on
//! evaluation order or thread count. Samplers use `libm` so transcendental functions give
//! the same bits on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

/// Derives a 64-bit seed from length-prefixed byte parts.
pub fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream keyed on `(seed, label)`; convenient for sub-streams of one run.
pub fn substream(seed: u64, label: &str) -> Stream {
    stream(derive_seed(&[&seed.to_le_bytes(), label.as_bytes()]))
}

/// Standard normal draws via the Box-Muller transform.
pub struct Normal {
    spare: Option<f64>,
}

impl Normal {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn sample(&mut self, rng: &mut impl Rng) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }
}

impl Default for Normal {
    fn default() -> Self {
        Self::new()
    }
}

/// Poisson draw by sequential CDF inversion; exact for the moderate means used here.
pub fn poisson(rng: &mut impl Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let u = rng.random::<f64>();
    let mut k = 0u64;
    let mut p = libm::exp(-mean);
    let mut cdf = p;
    // Past ~mean + 40·sqrt(mean) the remaining tail mass is far below f64 resolution.
    let cap = (mean + 40.0 * mean.sqrt() + 40.0) as u64;
    while u >= cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}
