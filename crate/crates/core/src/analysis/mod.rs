//! Trial analytics: knockdown hit rate, efficacy relative to blanket
//! spraying, herbicide usage reduction, image-based weed density and the
//! summary statistics comparing the two treatments.
//!
//! Rates are kept at full precision; [`round_percent`] produces the integer
//! percentages used in reports.

mod stats;

pub use stats::{
    mean, paired_differences, paired_t, pearson_r, pooled_t, sample_sd, sample_variance,
    t_p_value, welch_t, welch_t_from_summary, StatResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// sprayed / (sprayed + missed)
pub fn hit_rate(sprayed: u64, missed: u64) -> Result<f64> {
    let total = sprayed + missed;
    if total == 0 {
        return Err(Error::UndefinedRate(
            "no weeds were assessed (sprayed + missed = 0)".into(),
        ));
    }
    Ok(sprayed as f64 / total as f64)
}

/// Spot-spray hit rate as a fraction of the blanket-spray hit rate.
pub fn efficacy(spot_hit_rate: f64, blanket_hit_rate: f64) -> Result<f64> {
    if !(blanket_hit_rate > 0.0) {
        return Err(Error::UndefinedRate(
            "efficacy needs a positive blanket hit rate".into(),
        ));
    }
    Ok(spot_hit_rate / blanket_hit_rate)
}

/// 1 − spot / blanket
pub fn usage_reduction(blanket_usage: f64, spot_usage: f64) -> Result<f64> {
    if !(blanket_usage > 0.0) {
        return Err(Error::UndefinedRate(
            "usage reduction needs a positive blanket usage".into(),
        ));
    }
    Ok(1.0 - spot_usage / blanket_usage)
}

/// Images with a detection over all images of a treatment area.
pub fn weed_density(images_with_detection: u64, images_total: u64) -> Result<f64> {
    if images_total == 0 {
        return Err(Error::UndefinedRate("no images recorded".into()));
    }
    if images_with_detection > images_total {
        return Err(Error::Domain(format!(
            "{images_with_detection} images with detections out of only {images_total}"
        )));
    }
    Ok(images_with_detection as f64 / images_total as f64)
}

/// Nearest integer percentage, halves away from zero.
pub fn round_percent(fraction: f64) -> i64 {
    (fraction * 100.0).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knockdown {
    Counts { sprayed: u64, missed: u64 },
    /// A hit rate reported without the underlying counts.
    Rate(f64),
}

impl Knockdown {
    pub fn hit_rate(&self) -> Result<f64> {
        match *self {
            Self::Counts { sprayed, missed } => hit_rate(sprayed, missed),
            Self::Rate(r) if (0.0..=1.0).contains(&r) => Ok(r),
            Self::Rate(r) => Err(Error::Domain(format!("hit rate {r} outside [0, 1]"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentStats {
    pub knockdown: Option<Knockdown>,
    pub usage_l_per_ha: f64,
    pub images_total: Option<u64>,
    pub images_with_detection: Option<u64>,
    pub area_ha: Option<f64>,
}

impl TreatmentStats {
    pub fn usage_only(usage_l_per_ha: f64) -> Self {
        Self {
            knockdown: None,
            usage_l_per_ha,
            images_total: None,
            images_with_detection: None,
            area_ha: None,
        }
    }

    pub fn with_hit_rate(mut self, rate: f64) -> Self {
        self.knockdown = Some(Knockdown::Rate(rate));
        self
    }

    pub fn with_counts(mut self, sprayed: u64, missed: u64) -> Self {
        self.knockdown = Some(Knockdown::Counts { sprayed, missed });
        self
    }

    pub fn hit_rate(&self) -> Option<Result<f64>> {
        self.knockdown.map(|k| k.hit_rate())
    }

    pub fn weed_density(&self) -> Option<Result<f64>> {
        match (self.images_with_detection, self.images_total) {
            (Some(w), Some(t)) => Some(weed_density(w, t)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.usage_l_per_ha >= 0.0) {
            return Err(Error::Domain(format!(
                "usage must be >= 0, got {}",
                self.usage_l_per_ha
            )));
        }
        if let Some(a) = self.area_ha {
            if !(a > 0.0) {
                return Err(Error::Domain(format!("area must be > 0 ha, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub spot: TreatmentStats,
    pub blanket: TreatmentStats,
    pub hit_rate_spot: Option<f64>,
    pub hit_rate_blanket: Option<f64>,
    /// Present only when both hit rates are.
    pub efficacy: Option<f64>,
    pub usage_reduction: f64,
}

pub fn summarize_trial(
    trial_id: impl Into<String>,
    spot: TreatmentStats,
    blanket: TreatmentStats,
) -> Result<TrialSummary> {
    spot.validate()?;
    blanket.validate()?;
    let hit_rate_spot = spot.hit_rate().transpose()?;
    let hit_rate_blanket = blanket.hit_rate().transpose()?;
    let efficacy = match (hit_rate_spot, hit_rate_blanket) {
        (Some(s), Some(b)) => Some(efficacy(s, b)?),
        _ => None,
    };
    Ok(TrialSummary {
        trial_id: trial_id.into(),
        usage_reduction: usage_reduction(blanket.usage_l_per_ha, spot.usage_l_per_ha)?,
        spot,
        blanket,
        hit_rate_spot,
        hit_rate_blanket,
        efficacy,
    })
}

/// The "average" row across trials. Hit rates and efficacy average over the
/// trials where knockdown was assessed; usage averages over all trials and
/// the reduction is taken between the two mean usages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageSummary {
    pub trials: usize,
    pub knockdown_trials: usize,
    pub hit_rate_spot: Option<f64>,
    pub hit_rate_blanket: Option<f64>,
    pub efficacy: Option<f64>,
    pub usage_spot: f64,
    pub usage_blanket: f64,
    pub usage_reduction: f64,
}

pub fn average_summary(trials: &[TrialSummary]) -> Result<AverageSummary> {
    if trials.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let opt_mean = |xs: Vec<f64>| if xs.is_empty() { None } else { mean(&xs).ok() };
    let spot_hits: Vec<f64> = trials.iter().filter_map(|t| t.hit_rate_spot).collect();
    let blanket_hits: Vec<f64> = trials.iter().filter_map(|t| t.hit_rate_blanket).collect();
    let effs: Vec<f64> = trials.iter().filter_map(|t| t.efficacy).collect();
    let usage_spot = mean(&trials.iter().map(|t| t.spot.usage_l_per_ha).collect::<Vec<_>>())?;
    let usage_blanket =
        mean(&trials.iter().map(|t| t.blanket.usage_l_per_ha).collect::<Vec<_>>())?;
    Ok(AverageSummary {
        trials: trials.len(),
        knockdown_trials: effs.len(),
        hit_rate_spot: opt_mean(spot_hits),
        hit_rate_blanket: opt_mean(blanket_hits),
        efficacy: opt_mean(effs),
        usage_spot,
        usage_blanket,
        usage_reduction: usage_reduction(usage_blanket, usage_spot)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Result<Self> {
        Ok(Self {
            mean: mean(xs)?,
            sd: sample_sd(xs)?,
            n: xs.len(),
        })
    }
}

/// Usage and knockdown statistics across trials, both treatments side by
/// side. Both the Welch and the paired test are always attempted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageStatistics {
    pub usage_spot: MeanSd,
    pub usage_blanket: MeanSd,
    pub welch: StatResult,
    pub paired: Option<StatResult>,
    /// Knockdown in percent.
    pub knockdown_spot: Option<MeanSd>,
    pub knockdown_blanket: Option<MeanSd>,
    /// Spot-treatment weed density against spot usage.
    pub density_usage_r: Option<f64>,
    pub notes: Vec<String>,
}

pub fn usage_statistics(trials: &[TrialSummary]) -> Result<UsageStatistics> {
    let spot: Vec<f64> = trials.iter().map(|t| t.spot.usage_l_per_ha).collect();
    let blanket: Vec<f64> = trials.iter().map(|t| t.blanket.usage_l_per_ha).collect();
    let mut notes = Vec::new();
    let welch = welch_t(&spot, &blanket)?;
    let paired = match paired_t(&paired_differences(&spot, &blanket)?) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("paired t-test not computed: {e}"));
            None
        }
    };
    let pct = |xs: Vec<f64>| -> Option<MeanSd> {
        let xs: Vec<f64> = xs.into_iter().map(|x| x * 100.0).collect();
        MeanSd::of(&xs).ok()
    };
    let knockdown_spot = pct(trials.iter().filter_map(|t| t.hit_rate_spot).collect());
    let knockdown_blanket = pct(trials.iter().filter_map(|t| t.hit_rate_blanket).collect());

    let pairs: Vec<(f64, f64)> = trials
        .iter()
        .filter_map(|t| match t.spot.weed_density() {
            Some(Ok(d)) => Some((d, t.spot.usage_l_per_ha)),
            _ => None,
        })
        .collect();
    let density_usage_r = if pairs.is_empty() {
        notes.push("weed density not available; density-usage correlation not computed".into());
        None
    } else {
        let (d, u): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        match pearson_r(&d, &u) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("density-usage correlation not computed: {e}"));
                None
            }
        }
    };
    Ok(UsageStatistics {
        usage_spot: MeanSd::of(&spot)?,
        usage_blanket: MeanSd::of(&blanket)?,
        welch,
        paired,
        knockdown_spot,
        knockdown_blanket,
        density_usage_r,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Published per-trial values: (blanket hit %, spot hit %, blanket L/ha, spot L/ha).
    const TRIALS: [(Option<f64>, Option<f64>, f64, f64); 6] = [
        (None, None, 200.0, 177.0),
        (Some(97.0), Some(95.0), 198.0, 81.0),
        (Some(97.0), Some(89.0), 199.0, 183.0),
        (Some(99.0), Some(96.0), 211.0, 100.0),
        (Some(100.0), Some(100.0), 211.0, 178.0),
        (Some(100.0), Some(96.0), 207.0, 73.0),
    ];

    fn summaries() -> Vec<TrialSummary> {
        TRIALS
            .iter()
            .enumerate()
            .map(|(i, &(hb, hs, ub, us))| {
                let mut spot = TreatmentStats::usage_only(us);
                let mut blanket = TreatmentStats::usage_only(ub);
                if let (Some(hb), Some(hs)) = (hb, hs) {
                    spot = spot.with_hit_rate(hs / 100.0);
                    blanket = blanket.with_hit_rate(hb / 100.0);
                }
                summarize_trial((i + 1).to_string(), spot, blanket).unwrap()
            })
            .collect()
    }

    #[test]
    fn hit_rate_examples() {
        assert_abs_diff_eq!(hit_rate(89, 11).unwrap(), 0.89, epsilon = 1e-15);
        assert_eq!(hit_rate(40, 0).unwrap(), 1.0);
        assert_eq!(hit_rate(0, 40).unwrap(), 0.0);
        assert!(matches!(hit_rate(0, 0), Err(Error::UndefinedRate(_))));
    }

    #[test]
    fn efficacy_examples() {
        assert_eq!(round_percent(efficacy(0.95, 0.97).unwrap()), 98);
        assert_abs_diff_eq!(efficacy(0.95, 0.97).unwrap(), 0.979, epsilon = 5e-4);
        assert_eq!(round_percent(efficacy(0.89, 0.97).unwrap()), 92);
        assert_eq!(efficacy(0.8, 0.8).unwrap(), 1.0);
        assert!(efficacy(0.8, 0.0).is_err());
    }

    #[test]
    fn usage_reduction_examples() {
        assert_eq!(round_percent(usage_reduction(207.0, 73.0).unwrap()), 65);
        assert_eq!(round_percent(usage_reduction(204.0, 132.0).unwrap()), 35);
        assert_eq!(usage_reduction(150.0, 150.0).unwrap(), 0.0);
        assert!(usage_reduction(0.0, 10.0).is_err());
    }

    #[test]
    fn weed_density_examples() {
        assert_eq!(weed_density(0, 50).unwrap(), 0.0);
        assert_eq!(weed_density(50, 50).unwrap(), 1.0);
        assert!(weed_density(1, 0).is_err());
        assert!(weed_density(3, 2).is_err());
    }

    #[test]
    fn trial_six_summary() {
        let s = summarize_trial(
            "6",
            TreatmentStats::usage_only(73.0).with_hit_rate(0.96),
            TreatmentStats::usage_only(207.0).with_hit_rate(1.0),
        )
        .unwrap();
        assert_eq!(round_percent(s.efficacy.unwrap()), 96);
        assert_eq!(round_percent(s.usage_reduction), 65);
    }

    #[test]
    fn identical_treatments_summary() {
        let t = TreatmentStats::usage_only(190.0).with_counts(45, 5);
        let s = summarize_trial("x", t, t).unwrap();
        assert_eq!(round_percent(s.efficacy.unwrap()), 100);
        assert_eq!(round_percent(s.usage_reduction), 0);
    }

    #[test]
    fn published_average_row() {
        let avg = average_summary(&summaries()).unwrap();
        assert_abs_diff_eq!(avg.usage_spot, 132.0, epsilon = 1e-12);
        assert_abs_diff_eq!(avg.usage_blanket, 1226.0 / 6.0, epsilon = 1e-12);
        assert_eq!(avg.usage_spot.round(), 132.0);
        assert_eq!(avg.usage_blanket.round(), 204.0);
        assert_eq!(round_percent(avg.usage_reduction), 35);
        assert_eq!(round_percent(avg.efficacy.unwrap()), 97);
        assert_abs_diff_eq!(avg.hit_rate_spot.unwrap(), 0.952, epsilon = 1e-12);
        assert_abs_diff_eq!(avg.hit_rate_blanket.unwrap(), 0.986, epsilon = 1e-12);
        assert_eq!(round_percent(avg.hit_rate_spot.unwrap()), 95);
        assert_eq!(round_percent(avg.hit_rate_blanket.unwrap()), 99);
        assert_eq!(avg.knockdown_trials, 5);
    }

    #[test]
    fn usage_statistics_on_published_columns() {
        let st = usage_statistics(&summaries()).unwrap();
        assert_abs_diff_eq!(st.usage_spot.mean, 132.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st.usage_spot.sd, 52.626989273565705, epsilon = 1e-9);
        assert_abs_diff_eq!(st.usage_blanket.sd, 6.0553007081949835, epsilon = 1e-9);
        assert_abs_diff_eq!(st.welch.statistic, -3.3446, epsilon = 1e-4);
        assert_abs_diff_eq!(st.paired.unwrap().statistic, -3.30, epsilon = 0.005);
        let ks = st.knockdown_spot.unwrap();
        assert_abs_diff_eq!(ks.mean, 95.2, epsilon = 1e-9);
        assert_eq!(ks.n, 5);
        assert!(st.density_usage_r.is_none());
        assert!(!st.notes.is_empty());
    }

    #[test]
    fn density_correlation_uses_image_counts() {
        let mk = |w, us| {
            let mut s = TreatmentStats::usage_only(us);
            s.images_total = Some(1000);
            s.images_with_detection = Some(w);
            s
        };
        let trials: Vec<_> = [(50, 60.0), (200, 90.0), (400, 140.0), (600, 170.0)]
            .iter()
            .enumerate()
            .map(|(i, &(w, us))| summarize_trial(i.to_string(), mk(w, us), TreatmentStats::usage_only(200.0 + i as f64)).unwrap())
            .collect();
        let st = usage_statistics(&trials).unwrap();
        assert!(st.density_usage_r.unwrap() > 0.99);
    }

    proptest! {
        #[test]
        fn hit_rate_in_unit_interval(s in 0u64..10_000, m in 0u64..10_000) {
            prop_assume!(s + m > 0);
            let r = hit_rate(s, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn efficacy_scale_invariant(a in 0.01f64..1.0, b in 0.01f64..1.0, k in 0.1f64..10.0) {
            let e = efficacy(a, b).unwrap();
            prop_assert!((efficacy(a * k, b * k).unwrap() - e).abs() < 1e-12 * e.max(1.0));
        }
    }
}
