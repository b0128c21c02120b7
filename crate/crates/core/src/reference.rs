//! Published field-trial values bundled with the tool, transcribed by hand
//! from the reference study. They serve two purposes: as an input dataset
//! for `paper-compare`, and as the published figures that computed results
//! are compared against.
//!
//! Trial 1 has no knockdown assessment and no water-quality data; trials 1
//! and 2 have no runoff rows.

use serde::Serialize;

use crate::error::Result;
use crate::io::{read_runoff_summary, read_treatments, TreatmentRecord};
use crate::waterq::RunoffPair;

pub const LABEL: &str = "published reference (transcribed)";

pub const TREATMENTS_CSV: &str = include_str!("../data/reference_treatments.csv");
pub const RUNOFF_CSV: &str = include_str!("../data/reference_runoff.csv");

pub fn treatments() -> Result<Vec<TreatmentRecord>> {
    read_treatments("bundled reference treatments", TREATMENTS_CSV.as_bytes())
}

pub fn runoff() -> Result<Vec<RunoffPair>> {
    read_runoff_summary("bundled reference runoff", RUNOFF_CSV.as_bytes())
}

/// A published number and the number of decimals it was printed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Printed {
    pub value: f64,
    pub decimals: usize,
}

const fn p(value: f64, decimals: usize) -> Printed {
    Printed { value, decimals }
}

/// Per-trial efficacy and usage reduction, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedTrial {
    pub trial_id: &'static str,
    pub efficacy_pct: Option<Printed>,
    pub usage_reduction_pct: Printed,
}

pub const TRIALS: [PublishedTrial; 6] = [
    PublishedTrial { trial_id: "1", efficacy_pct: None, usage_reduction_pct: p(11.0, 0) },
    PublishedTrial { trial_id: "2", efficacy_pct: Some(p(98.0, 0)), usage_reduction_pct: p(59.0, 0) },
    PublishedTrial { trial_id: "3", efficacy_pct: Some(p(92.0, 0)), usage_reduction_pct: p(8.0, 0) },
    PublishedTrial { trial_id: "4", efficacy_pct: Some(p(97.0, 0)), usage_reduction_pct: p(53.0, 0) },
    PublishedTrial { trial_id: "5", efficacy_pct: Some(p(100.0, 0)), usage_reduction_pct: p(16.0, 0) },
    PublishedTrial { trial_id: "6", efficacy_pct: Some(p(96.0, 0)), usage_reduction_pct: p(65.0, 0) },
];

/// The average row of the efficacy and usage table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedAverages {
    pub hit_rate_blanket_pct: Printed,
    pub hit_rate_spot_pct: Printed,
    pub usage_blanket: Printed,
    pub usage_spot: Printed,
    pub efficacy_pct: Printed,
    pub usage_reduction_pct: Printed,
}

pub const AVERAGES: PublishedAverages = PublishedAverages {
    hit_rate_blanket_pct: p(99.0, 0),
    hit_rate_spot_pct: p(95.0, 0),
    usage_blanket: p(204.0, 0),
    usage_spot: p(132.0, 0),
    efficacy_pct: p(97.0, 0),
    usage_reduction_pct: p(35.0, 0),
};

/// Per-ingredient runoff reductions, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedRunoffRow {
    pub trial_id: &'static str,
    pub ingredient: &'static str,
    pub concentration_reduction_pct: Printed,
    pub load_reduction_pct: Printed,
}

pub const RUNOFF_ROWS: [PublishedRunoffRow; 5] = [
    PublishedRunoffRow { trial_id: "3", ingredient: "ametryn", concentration_reduction_pct: p(51.0, 0), load_reduction_pct: p(60.0, 0) },
    PublishedRunoffRow { trial_id: "3", ingredient: "trifloxysulfuron", concentration_reduction_pct: p(40.0, 0), load_reduction_pct: p(51.0, 0) },
    PublishedRunoffRow { trial_id: "4", ingredient: "haloxyfop", concentration_reduction_pct: p(46.0, 0), load_reduction_pct: p(67.0, 0) },
    PublishedRunoffRow { trial_id: "5", ingredient: "acifluorfen", concentration_reduction_pct: p(25.0, 0), load_reduction_pct: p(55.0, 0) },
    PublishedRunoffRow { trial_id: "6", ingredient: "halosulfuron", concentration_reduction_pct: p(34.0, 0), load_reduction_pct: p(34.0, 0) },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedRunoffAverages {
    pub blanket_concentration_ugl: Printed,
    pub blanket_load_g_per_ha: Printed,
    pub spot_concentration_ugl: Printed,
    pub spot_load_g_per_ha: Printed,
    pub concentration_reduction_pct: Printed,
    pub load_reduction_pct: Printed,
}

pub const RUNOFF_AVERAGES: PublishedRunoffAverages = PublishedRunoffAverages {
    blanket_concentration_ugl: p(29.05, 2),
    blanket_load_g_per_ha: p(3.66, 2),
    spot_concentration_ugl: p(15.76, 2),
    spot_load_g_per_ha: p(1.52, 2),
    concentration_reduction_pct: p(39.0, 0),
    load_reduction_pct: p(54.0, 0),
};

/// Summary statistics of usage and knockdown across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedStatistics {
    pub usage_spot_mean: Printed,
    pub usage_spot_sd: Printed,
    pub usage_blanket_mean: Printed,
    pub usage_blanket_sd: Printed,
    /// Described as a paired test.
    pub usage_t: Printed,
    pub usage_p: Printed,
    pub knockdown_spot_mean: Printed,
    pub knockdown_spot_sd: Printed,
    pub knockdown_blanket_mean: Printed,
    pub knockdown_blanket_sd: Printed,
    pub density_usage_r: Printed,
    pub trials: usize,
}

pub const STATISTICS: PublishedStatistics = PublishedStatistics {
    usage_spot_mean: p(132.0, 0),
    usage_spot_sd: p(50.0, 0),
    usage_blanket_mean: p(204.0, 0),
    usage_blanket_sd: p(9.0, 0),
    usage_t: p(-4.5754, 4),
    usage_p: p(0.0007, 4),
    knockdown_spot_mean: p(94.67, 2),
    knockdown_spot_sd: p(4.44, 2),
    knockdown_blanket_mean: p(98.33, 2),
    knockdown_blanket_sd: p(1.37, 2),
    density_usage_r: p(0.9824, 4),
    trials: 6,
};

/// Timing of the detection-to-spray pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedTiming {
    pub total_latency_ms: Printed,
    pub total_latency_sd_ms: Printed,
    pub displacement_mm: Printed,
    pub spray_duration_s: Printed,
    pub section_length_m: Printed,
    pub frame_rate_fps: Printed,
    pub speed_kmh: Printed,
}

pub const TIMING: PublishedTiming = PublishedTiming {
    total_latency_ms: p(58.16, 2),
    total_latency_sd_ms: p(5.83, 2),
    displacement_mm: p(129.2, 1),
    spray_duration_s: p(0.45, 2),
    section_length_m: p(1.0, 0),
    frame_rate_fps: p(45.7, 1),
    speed_kmh: p(8.0, 0),
};
