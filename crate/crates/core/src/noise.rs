//! Counter-based noise: every draw is a pure function of
//! `(master_seed, path, step, channel)`, so results do not depend on the
//! order paths are simulated in or on the thread count, and two simulations
//! with the same plan see the same Brownian and Poisson increments.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise source of one simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Brownian,
    /// Poisson counts of mark `i` (0-based).
    Mark(usize),
}

impl Channel {
    fn index(self) -> u64 {
        match self {
            Channel::Brownian => 0,
            Channel::Mark(i) => 1 + i as u64,
        }
    }
}

/// SplitMix64 stream keyed by a hashed `(seed, path, step, channel)` tuple.
/// Output `i` is `mix64(key + (i + 1) * GOLDEN)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, path: u64, step: u64, channel: Channel) -> Self {
        let mut k = mix64(seed ^ GOLDEN);
        k = mix64(k ^ path.wrapping_mul(0xD1B5_4A32_D192_ED03));
        k = mix64(k ^ step.wrapping_mul(0xAEF1_7502_108E_F2D9));
        k = mix64(k ^ channel.index().wrapping_mul(0xF1357AEA2E62A9C5));
        Self { key: k, counter: 0 }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Seed and path count of a Monte Carlo batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct NoisePlan {
    pub master_seed: u64,
    pub paths: usize,
}

impl NoisePlan {
    pub fn new(master_seed: u64, paths: usize) -> Self {
        Self { master_seed, paths }
    }

    pub fn rng(&self, path: usize, step: usize, channel: Channel) -> CounterRng {
        CounterRng::new(self.master_seed, path as u64, step as u64, channel)
    }

    /// Brownian increment over a step of length `h`: `N(0, h)`.
    pub fn brownian(&self, path: usize, step: usize, h: f64) -> f64 {
        let z: f64 = self.rng(path, step, Channel::Brownian).sample(StandardNormal);
        z * h.sqrt()
    }

    /// Number of mark-`mark` jumps in a step: `Poisson(intensity * h)`.
    pub fn jumps(&self, path: usize, step: usize, mark: usize, intensity: f64, h: f64) -> u64 {
        let lambda = intensity * h;
        if lambda <= 0.0 {
            return 0;
        }
        let dist = Poisson::new(lambda).expect("finite positive Poisson rate");
        let count: f64 = dist.sample(&mut self.rng(path, step, Channel::Mark(mark)));
        count as u64
    }
}
