//! Stochastic stand-in for the per-tile weed classifier.
//!
//! Each tile view is classified independently per class: an occupied class is
//! reported with probability TPR, an empty one with probability FPR. A frame
//! may be under-exposed, in which case every TPR in that frame is scaled by
//! the degradation multiplier. Successive views of the same weed are treated
//! as independent Bernoulli trials.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldgen::SpeciesClass;
use crate::geometry::{displacement_during, Speed};

/// One boolean per species class, indexed by [`SpeciesClass::index`].
pub type ClassFlags = [bool; SpeciesClass::COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureDegradation {
    pub event_probability: f64,
    pub tpr_multiplier: f64,
}

impl Default for ExposureDegradation {
    fn default() -> Self {
        Self {
            event_probability: 0.0,
            tpr_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub true_positive_rate: [f64; SpeciesClass::COUNT],
    pub false_positive_rate: f64,
    pub exposure: ExposureDegradation,
    /// Classes the deployed model looks for; the others are never reported.
    pub targets: ClassFlags,
}

impl Default for DetectorProfile {
    /// Placeholder rates for demos, not calibrated to any trial.
    fn default() -> Self {
        Self::uniform(0.95, 0.02)
    }
}

impl DetectorProfile {
    pub fn uniform(tpr: f64, fpr: f64) -> Self {
        Self {
            true_positive_rate: [tpr; SpeciesClass::COUNT],
            false_positive_rate: fpr,
            exposure: ExposureDegradation::default(),
            targets: [true; SpeciesClass::COUNT],
        }
    }

    pub fn perfect() -> Self {
        Self::uniform(1.0, 0.0)
    }

    pub fn with_targets(mut self, targets: &[SpeciesClass]) -> Self {
        self.targets = [false; SpeciesClass::COUNT];
        for t in targets {
            self.targets[t.index()] = true;
        }
        self
    }

    pub fn with_exposure(mut self, event_probability: f64, tpr_multiplier: f64) -> Self {
        self.exposure = ExposureDegradation {
            event_probability,
            tpr_multiplier,
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        for (class, &p) in SpeciesClass::ALL.iter().zip(&self.true_positive_rate) {
            prob(&format!("true positive rate ({class})"), p)?;
        }
        prob("false positive rate", self.false_positive_rate)?;
        prob("exposure event probability", self.exposure.event_probability)?;
        prob("exposure TPR multiplier", self.exposure.tpr_multiplier)?;
        if !self.targets.iter().any(|&t| t) {
            return Err(Error::Domain("detector must target at least one class".into()));
        }
        Ok(())
    }
}

/// Classifies one tile view. One uniform draw is consumed per class whatever
/// the outcome, so the stream position does not depend on the rates.
pub fn classify_tile<R: Rng + ?Sized>(
    truth: &ClassFlags,
    profile: &DetectorProfile,
    degraded: bool,
    rng: &mut R,
) -> ClassFlags {
    let mut predicted = [false; SpeciesClass::COUNT];
    for class in 0..SpeciesClass::COUNT {
        let u: f64 = rng.random();
        if !profile.targets[class] {
            continue;
        }
        let p = if truth[class] {
            let tpr = profile.true_positive_rate[class];
            if degraded {
                tpr * profile.exposure.tpr_multiplier
            } else {
                tpr
            }
        } else {
            profile.false_positive_rate
        };
        predicted[class] = u < p;
    }
    predicted
}

/// Number of consecutive frames in which a weed is inside the along-track
/// footprint.
pub fn views_per_weed(speed: Speed, frame_period_ms: f64, along_track_footprint_m: f64) -> Result<u32> {
    if !(frame_period_ms > 0.0) {
        return Err(Error::Domain(format!(
            "frame period must be > 0 ms, got {frame_period_ms}"
        )));
    }
    if !(along_track_footprint_m > 0.0) || !(speed.mps() > 0.0) {
        return Err(Error::Domain(
            "speed and along-track footprint must be > 0".into(),
        ));
    }
    let step_m = displacement_during(speed, frame_period_ms)? / 1000.0;
    let views = (along_track_footprint_m / step_m).floor();
    Ok((views as u32).max(1))
}

/// Probability that at least one of `views` independent looks detects.
pub fn compound_detection_probability(p_per_view: f64, views: u32) -> f64 {
    1.0 - (1.0 - p_per_view).powi(views as i32)
}

/// Per-class 2×2 tally of tile views.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: u64,
    pub false_negative: u64,
    pub false_positive: u64,
    pub true_negative: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: bool, predicted: bool) {
        match (truth, predicted) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_negative += 1,
            (false, true) => self.false_positive += 1,
            (false, false) => self.true_negative += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.true_positive += other.true_positive;
        self.false_negative += other.false_negative;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
    }

    pub fn positives(&self) -> u64 {
        self.true_positive + self.false_negative
    }

    pub fn negatives(&self) -> u64 {
        self.false_positive + self.true_negative
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }

    pub fn is_diagonal(&self) -> bool {
        self.false_negative == 0 && self.false_positive == 0
    }

    /// Pearson χ² of the observed matrix against the rates `tpr` and `fpr`
    /// (two degrees of freedom: one per truth row). Rows whose expected cell
    /// counts include a zero are skipped.
    pub fn chi_square(&self, tpr: f64, fpr: f64) -> f64 {
        fn row(hits: u64, misses: u64, p: f64) -> f64 {
            let n = (hits + misses) as f64;
            let (e_hit, e_miss) = (n * p, n * (1.0 - p));
            if e_hit == 0.0 || e_miss == 0.0 {
                return 0.0;
            }
            (hits as f64 - e_hit).powi(2) / e_hit + (misses as f64 - e_miss).powi(2) / e_miss
        }
        row(self.true_positive, self.false_negative, tpr)
            + row(self.false_positive, self.true_negative, fpr)
    }
}

/// One classified tile view kept in a pass log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame_id: u64,
    pub tile_id: usize,
    pub timestamp_ms: f64,
    pub predicted: ClassFlags,
    pub truth_weed_ids: Vec<u64>,
}

impl DetectionRecord {
    pub fn any_predicted(&self) -> bool {
        self.predicted.iter().any(|&p| p)
    }
}
