use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A reproducible random stream keyed by `(master_seed, stream_index)`.
///
/// Equal keys give identical sequences. Distinct indices select distinct
/// ChaCha streams under the same key, so replications can be generated in
/// any order or on any thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// A child stream, independent of the parent and of its siblings.
    pub fn substream(&self, index: u64) -> RngStream {
        let key = splitmix64(self.master_seed ^ splitmix64(self.stream_index.wrapping_add(1)));
        RngStream::new(key, index)
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Inverse-CDF sampler over a fixed probability vector.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cdf: Vec<f64>,
}

impl CategoricalSampler {
    /// Accepts non-negative weights summing to one within `1e-10`.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("empty probability vector"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("probabilities must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain("probabilities must sum to one"));
        }
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty");
        let u: f64 = rng.random::<f64>() * total;
        // First index whose cumulative mass exceeds u; zero-weight cells are
        // never selected.
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1)
    }
}

/// Draws one index with probability `weights[i]`.
pub fn categorical_sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    Ok(CategoricalSampler::new(weights)?.sample(rng))
}
