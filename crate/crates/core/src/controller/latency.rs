//! Image-to-spray delay budget.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDelay {
    pub mean_ms: f64,
    pub sd_ms: f64,
}

impl StageDelay {
    pub const fn new(mean_ms: f64, sd_ms: f64) -> Self {
        Self { mean_ms, sd_ms }
    }

    /// Normal draw truncated at zero (rejection).
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd_ms == 0.0 {
            return self.mean_ms;
        }
        let normal = Normal::new(self.mean_ms, self.sd_ms).expect("sd validated finite and >= 0");
        loop {
            let x = normal.sample(rng);
            if x >= 0.0 {
                return x;
            }
        }
    }
}

/// Four sequential stages from shutter to solenoid. Defaults are the
/// measured Jetson Nano / MobileNetV2 timings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub acquisition: StageDelay,
    pub preprocessing: StageDelay,
    pub inference: StageDelay,
    pub solenoid: StageDelay,
}

impl Default for LatencyProfile {
    fn default() -> Self {
        Self {
            acquisition: StageDelay::new(5.85, 0.75),
            preprocessing: StageDelay::new(8.88, 0.05),
            inference: StageDelay::new(21.90, 5.53),
            solenoid: StageDelay::new(21.53, 1.70),
        }
    }
}

impl LatencyProfile {
    pub fn stages(&self) -> [StageDelay; 4] {
        [self.acquisition, self.preprocessing, self.inference, self.solenoid]
    }

    /// Same means, zero spread.
    pub fn deterministic(&self) -> Self {
        let z = |s: StageDelay| StageDelay::new(s.mean_ms, 0.0);
        Self {
            acquisition: z(self.acquisition),
            preprocessing: z(self.preprocessing),
            inference: z(self.inference),
            solenoid: z(self.solenoid),
        }
    }

    pub fn zeroed() -> Self {
        let z = StageDelay::new(0.0, 0.0);
        Self {
            acquisition: z,
            preprocessing: z,
            inference: z,
            solenoid: z,
        }
    }

    pub fn total_mean_ms(&self) -> f64 {
        self.stages().iter().map(|s| s.mean_ms).sum()
    }

    /// Standard deviation of the sum of independent stages.
    pub fn total_sd_ms(&self) -> f64 {
        self.stages().iter().map(|s| s.sd_ms * s.sd_ms).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in ["acquisition", "preprocessing", "inference", "solenoid"]
            .iter()
            .zip(self.stages())
        {
            if !(s.mean_ms >= 0.0 && s.mean_ms.is_finite()) || !(s.sd_ms >= 0.0 && s.sd_ms.is_finite()) {
                return Err(Error::Domain(format!(
                    "{name} latency needs mean >= 0 and sd >= 0, got ({}, {})",
                    s.mean_ms, s.sd_ms
                )));
            }
        }
        Ok(())
    }
}

/// One end-to-end delay: the sum of four independent truncated-normal stages.
pub fn sample_total_latency<R: Rng + ?Sized>(profile: &LatencyProfile, rng: &mut R) -> f64 {
    profile.stages().iter().map(|s| s.sample(rng)).sum()
}
