//! SplitMix64 random stream.
//!
//! The generator is fully specified here so fixtures can be reproduced in any
//! language:
//!
//! ```text
//! state  <- state + 0x9E3779B97F4A7C15           (wrapping)
//! z      <- state
//! z      <- (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 (wrapping)
//! z      <- (z ^ (z >> 27)) * 0x94D049BB133111EB (wrapping)
//! output <- z ^ (z >> 31)
//! ```
//!
//! * `uniform()` is `(next >> 11) * 2^-53`, in `[0, 1)`.
//! * `normal()` is one Box-Muller draw using two consecutive outputs:
//!   `u1 = ((next >> 11) + 1) * 2^-53` (in `(0, 1]`), `u2 = uniform()`,
//!   `sqrt(-2 ln u1) * cos(2 pi u2)`.
//! * `below(m)` rejects outputs `>= 2^64 - (2^64 mod m)` and returns `next mod m`.
//! * `derive(seed, stream)` seeds an independent stream as
//!   `finalize(seed + (stream + 1) * 0x9E3779B97F4A7C15)`.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream number `stream` derived from `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(finalize(seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        finalize(self.state)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `0..m`. `m` must be positive.
    pub fn below(&mut self, m: u64) -> u64 {
        assert!(m > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX - m + 1) % m;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_outputs() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut rng = SplitMix64::new(1_234_567);
        let expected = [
            6_457_827_717_110_365_317u64,
            3_203_168_211_198_807_973,
            9_817_491_932_198_370_423,
            4_593_380_528_125_082_431,
            16_408_922_859_458_223_821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn uniform_and_below_ranges() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.below(7) < 7);
        }
        assert_eq!(rng.below(1), 0);
    }

    #[test]
    fn normal_moments() {
        let mut rng = SplitMix64::new(42);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn derived_streams_differ() {
        let a = SplitMix64::derive(8, 0).next_u64();
        let b = SplitMix64::derive(8, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, SplitMix64::derive(8, 0).next_u64());
    }
}
