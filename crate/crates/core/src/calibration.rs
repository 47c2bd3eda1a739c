//! Clip-range estimation from observed logits.
//!
//! All scalar logits seen at masked positions are folded into a streaming
//! mean/variance (Welford, with Chan's pairwise merge for parallel use) and
//! the clip range is fixed at `(μ, μ + 4σ)` using the population deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{ClipRange, LogitVector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogitSampleStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl LogitSampleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance, `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / self.count as f64)
    }

    pub fn std_dev(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFiniteSample(value));
        }
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
        Ok(())
    }

    /// Fold a raw slice. Nothing is recorded if any value is non-finite.
    pub fn accumulate_values(&mut self, values: &[f64]) -> Result<()> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample(bad));
        }
        for &v in values {
            self.push(v)?;
        }
        Ok(())
    }

    pub fn accumulate(&mut self, logits: &LogitVector) {
        // LogitVector guarantees finiteness
        for &v in logits.values() {
            self.count += 1;
            let delta = v - self.mean;
            self.mean += delta / self.count as f64;
            self.m2 += delta * (v - self.mean);
        }
    }

    /// Chan et al. pairwise combine.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb, n) = (self.count as f64, other.count as f64, count as f64);
        let delta = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + delta * nb / n,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    pub fn finalize_clip(&self) -> Result<ClipRange> {
        let sigma = self
            .std_dev()
            .ok_or(Error::InsufficientSamples(self.count))?;
        if sigma == 0.0 {
            return Err(Error::DegenerateVariance(self.count));
        }
        ClipRange::new(self.mean, self.mean + 4.0 * sigma)
    }
}

/// Stored result of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mu: f64,
    pub sigma: f64,
    pub count: u64,
    pub c_min: f64,
    pub c_max: f64,
}

impl Calibration {
    pub fn from_stats(stats: &LogitSampleStats) -> Result<Self> {
        let clip = stats.finalize_clip()?;
        Ok(Self {
            mu: stats.mean(),
            // finalize_clip succeeded, so the deviation exists
            sigma: stats.std_dev().unwrap_or_default(),
            count: stats.count(),
            c_min: clip.c_min(),
            c_max: clip.c_max(),
        })
    }

    pub fn clip_range(&self) -> Result<ClipRange> {
        ClipRange::new(self.c_min, self.c_max)
    }
}
