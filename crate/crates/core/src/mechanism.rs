//! Clipped-logit temperature sampling.
//!
//! Scores from a masked scorer are clamped into a fixed [`ClipRange`], which
//! bounds the per-token score difference between any two contexts by the
//! range width `Δu`. Sampling from `softmax(ū / T)` with `T = 2Δu / ε` is then
//! an instance of the exponential mechanism and is ε-LDP per invocation.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[c_min, c_max]` that logits are clamped into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClipRange", into = "RawClipRange")]
pub struct ClipRange {
    c_min: f64,
    c_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawClipRange {
    c_min: f64,
    c_max: f64,
}

impl TryFrom<RawClipRange> for ClipRange {
    type Error = Error;

    fn try_from(raw: RawClipRange) -> Result<Self> {
        ClipRange::new(raw.c_min, raw.c_max)
    }
}

impl From<ClipRange> for RawClipRange {
    fn from(clip: ClipRange) -> Self {
        RawClipRange {
            c_min: clip.c_min,
            c_max: clip.c_max,
        }
    }
}

impl ClipRange {
    pub fn new(c_min: f64, c_max: f64) -> Result<Self> {
        if !c_min.is_finite() || !c_max.is_finite() || c_min >= c_max {
            return Err(Error::InvalidClipRange { c_min, c_max });
        }
        Ok(Self { c_min, c_max })
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Score sensitivity `Δu`. Once clipped, any coordinate can move by at
    /// most the width of the range between two contexts.
    pub fn sensitivity(&self) -> f64 {
        self.c_max - self.c_min
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.c_min, self.c_max)
    }
}

/// Privacy parameter charged per mechanism invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidEpsilon(value));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Epsilon::new(value)
    }
}

impl From<Epsilon> for f64 {
    fn from(eps: Epsilon) -> f64 {
        eps.0
    }
}

/// One score per vocabulary entry. Never empty, never non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyLogits);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteLogit { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn vocab_size(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse-CDF draw. Returns the first index whose cumulative mass
    /// exceeds a uniform draw in `[0, 1)`.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let u = unit_uniform(rng);
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
            }
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
        // u landed in the rounding gap above the final partial sum
        last_positive
    }
}

/// Uniform double in `[0, 1)` from the top 53 bits of one 64-bit draw.
pub fn unit_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sensitivity(clip: &ClipRange) -> f64 {
    clip.sensitivity()
}

/// Sampling temperature `T = 2Δu / ε`.
pub fn temperature(eps: Epsilon, clip: &ClipRange) -> f64 {
    2.0 * clip.sensitivity() / eps.value()
}

pub fn clip_logits(logits: &LogitVector, clip: &ClipRange) -> LogitVector {
    LogitVector(logits.0.iter().map(|&v| clip.clamp(v)).collect())
}

/// `softmax(values / temperature)` with max-subtraction.
///
/// This is the raw sampling kernel; it does not clip. Callers that need the
/// privacy guarantee go through [`output_distribution`].
pub fn tempered_softmax(values: &[f64], temperature: f64) -> ProbabilityVector {
    let max = values
        .iter()
        .map(|v| v / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values
        .iter()
        .map(|v| (v / temperature - max).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    ProbabilityVector(weights.into_iter().map(|w| w / total).collect())
}

/// Mechanism output distribution over the vocabulary.
pub fn output_distribution(
    logits: &LogitVector,
    eps: Epsilon,
    clip: &ClipRange,
) -> ProbabilityVector {
    let clipped = clip_logits(logits, clip);
    tempered_softmax(clipped.values(), temperature(eps, clip))
}

/// Draw one token index from the mechanism. One call is one ε charge.
pub fn dp_sample<R: RngCore + ?Sized>(
    logits: &LogitVector,
    eps: Epsilon,
    clip: &ClipRange,
    rng: &mut R,
) -> usize {
    output_distribution(logits, eps, clip).sample(rng)
}
