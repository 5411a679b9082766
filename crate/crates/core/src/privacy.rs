//! Gaussian-mechanism calibration.
//!
//! An (ε, δ) budget and the per-channel event magnitudes k_i of the
//! adjacency relation fix the noise multiplier
//!
//! κ = (K + √(K² + 2ε)) / 2ε,  K = Q⁻¹(δ),
//!
//! and a system with ℓ₂-sensitivity Δ is made private by adding white
//! Gaussian noise of standard deviation κΔ to each output channel.
//!
//! Noise is drawn from ChaCha8 seeded with a 64-bit seed, using the ziggurat
//! normal sampler from `rand_distr`. Output is bit-stable for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::stream::EventStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
    pub k: Vec<f64>,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64, k: Vec<f64>) -> Result<Self> {
        let spec = Self { epsilon, delta, k };
        spec.validate()?;
        Ok(spec)
    }

    /// Same budget with k_i = `k` on `m` channels.
    pub fn uniform(epsilon: f64, delta: f64, k: f64, m: usize) -> Result<Self> {
        Self::new(epsilon, delta, vec![k; m])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta(self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidPrivacy(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.k.is_empty() {
            return Err(Error::InvalidPrivacy("k must list at least one channel".into()));
        }
        if let Some((i, v)) = self.k.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidPrivacy(format!("k[{i}] must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.k.len()
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.epsilon, self.delta)
    }

    /// Euclidean norm |k|₂.
    pub fn k_norm(&self) -> f64 {
        self.k.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Standard normal upper tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`q_function`]: Newton steps kept inside a shrinking bracket,
/// falling back to bisection whenever a step leaves it.
pub fn q_inverse(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if delta == 0.5 {
        return Ok(0.0);
    }
    // Q(±38.5) is at or beyond the smallest/largest representable tail.
    let (mut lo, mut hi) = (-38.5, 38.5);
    let mut x = 0.0;
    for _ in 0..200 {
        let r = q_function(x) - delta;
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = -normal_pdf(x);
        let mut next = if slope != 0.0 { x - r / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// κ_{δ,ε}; the arguments are assumed valid (see [`PrivacySpec::validate`]).
pub fn kappa(epsilon: f64, delta: f64) -> f64 {
    let k = q_inverse(delta).expect("delta validated by caller");
    let root = (k * k + 2.0 * epsilon).sqrt();
    // Both forms are equal; each avoids cancellation on its side of K = 0,
    // and the second gives exactly 1/√(2ε) at δ = 1/2.
    if k > 0.0 {
        (k + root) / (2.0 * epsilon)
    } else {
        1.0 / (root - k)
    }
}

/// Noise standard deviation for a system of the given ℓ₂-sensitivity.
pub fn noise_sigma(sensitivity: f64, spec: &PrivacySpec) -> f64 {
    spec.kappa() * sensitivity
}

/// i.i.d. N(0, σ²) samples, one row per channel.
pub fn gaussian_noise(channels: usize, len: usize, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels)
        .map(|_| {
            (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    sigma * z
                })
                .collect()
        })
        .collect()
}

/// Adds white Gaussian noise of standard deviation `sigma` to every sample.
pub fn add_noise(stream: &EventStream, sigma: f64, seed: u64) -> EventStream {
    let mut out = stream.clone();
    if sigma == 0.0 {
        return out;
    }
    let noise = gaussian_noise(stream.channel_count(), stream.len(), sigma, seed);
    for (i, n) in noise.iter().enumerate() {
        for (v, w) in out.channel_mut(i).iter_mut().zip(n) {
            *v += w;
        }
    }
    out
}

/// Derives an independent child seed; used to give every trial, channel or
/// stage its own stream from a single top-level seed.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined value.
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_at_zero_is_half() {
        assert_eq!(q_function(0.0), 0.5);
        assert_eq!(q_inverse(0.5).unwrap(), 0.0);
        assert!(q_function(40.0) < 1e-300);
    }

    #[test]
    fn invalid_delta() {
        for d in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(q_inverse(d), Err(Error::InvalidDelta(_))));
        }
        assert!(matches!(
            PrivacySpec::new(1.0, 1.5, vec![1.0]),
            Err(Error::InvalidDelta(_))
        ));
        assert!(PrivacySpec::new(0.0, 0.1, vec![1.0]).is_err());
        assert!(PrivacySpec::new(1.0, 0.1, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn sigma_is_linear_in_sensitivity() {
        let spec = PrivacySpec::new(0.5, 0.5, vec![1.0]).unwrap();
        assert_eq!(noise_sigma(0.0, &spec), 0.0);
        assert!((noise_sigma(1.0, &spec) - 1.0).abs() < 1e-15);
        assert!((noise_sigma(2.0, &spec) - 2.0 * noise_sigma(1.0, &spec)).abs() < 1e-15);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let s = EventStream::from_channels("u", vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(add_noise(&s, 0.0, 9), s);
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let s = EventStream::zeros("u", 2, 100);
        assert_eq!(add_noise(&s, 1.0, 7), add_noise(&s, 1.0, 7));
        assert_ne!(add_noise(&s, 1.0, 7), add_noise(&s, 1.0, 8));
    }

    #[test]
    fn split_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| split_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
