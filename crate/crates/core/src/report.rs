//! Report bundle: trial summaries, cross-trial statistics, runoff tables,
//! optional comparison with the published reference values, and the
//! provenance needed to trace every number back to its inputs.
//!
//! The text rendering rounds percentages to integers; CSV and JSON keep
//! full precision.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    average_summary, round_percent, usage_statistics, welch_t_from_summary, AverageSummary,
    TrialSummary, UsageStatistics,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fieldgen::Treatment;
use crate::geometry::{displacement_during, spray_section_length};
use crate::reference::{self, Printed};
use crate::waterq::{aggregate_reductions, runoff_averages, AggregateReductions, RunoffAverages, RunoffPair};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config_sha256: None,
            inputs: Vec::new(),
        }
    }

    pub fn with_config(mut self, config_bytes: &[u8], seed: u64) -> Self {
        self.config_sha256 = Some(sha256_hex(config_bytes));
        self.seed = Some(seed);
        self
    }

    pub fn with_input(mut self, name: impl Into<String>, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
        self
    }
}

impl Default for Provenance {
    fn default() -> Self {
        Self::new()
    }
}

/// One simulated strip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StripRow {
    pub trial_id: String,
    pub strip: usize,
    pub treatment: Treatment,
    pub area_ha: f64,
    pub weeds: usize,
    pub weeds_sprayed: usize,
    pub weeds_missed: usize,
    pub hit_rate: Option<f64>,
    pub usage_l_per_ha: f64,
    pub images_total: u64,
    pub images_with_detection: u64,
    pub weed_density: f64,
    pub spray_events: usize,
    pub sprayed_distance_fraction: f64,
}

/// Surrogate runoff for one simulated trial, driven by its usage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelledRunoff {
    pub pair: RunoffPair,
    pub usage_reduction: f64,
    pub concentration_reduction: f64,
    pub load_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub section: String,
    pub quantity: String,
    pub computed: Option<f64>,
    pub published: f64,
    /// Decimals the published value was printed with.
    pub decimals: usize,
    pub delta: Option<f64>,
    /// Whether the computed value prints as the published one.
    pub matches: Option<bool>,
}

impl ComparisonRow {
    fn new(section: &str, quantity: impl Into<String>, computed: Option<f64>, published: Printed) -> Self {
        let d = published.decimals;
        let same = |c: f64| {
            let a = format!("{:.*}", d, c);
            let b = format!("{:.*}", d, published.value);
            a == b || (a.trim_start_matches('-') == b.trim_start_matches('-') && a.trim_start_matches(['-', '0', '.']).is_empty())
        };
        Self {
            section: section.into(),
            quantity: quantity.into(),
            computed,
            published: published.value,
            decimals: d,
            delta: computed.map(|c| c - published.value),
            matches: computed.map(same),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub strips: Vec<StripRow>,
    pub trials: Vec<TrialSummary>,
    pub average: Option<AverageSummary>,
    pub statistics: Option<UsageStatistics>,
    pub runoff: Vec<RunoffPair>,
    pub runoff_averages: Option<RunoffAverages>,
    pub runoff_reductions: Option<AggregateReductions>,
    pub runoff_model: Vec<ModelledRunoff>,
    pub comparison: Vec<ComparisonRow>,
    pub notes: Vec<String>,
}

impl ReportBundle {
    pub fn new(provenance: Provenance, trials: Vec<TrialSummary>, runoff: Vec<RunoffPair>) -> Result<Self> {
        if trials.is_empty() && runoff.is_empty() {
            return Err(Error::Domain("nothing to report: no trials and no runoff data".into()));
        }
        let mut notes = Vec::new();
        let average = if trials.is_empty() {
            None
        } else {
            Some(average_summary(&trials)?)
        };
        let statistics = if trials.len() < 2 {
            if !trials.is_empty() {
                notes.push("cross-trial statistics need at least two trials".into());
            }
            None
        } else {
            match usage_statistics(&trials) {
                Ok(s) => Some(s),
                Err(e) => {
                    notes.push(format!("cross-trial statistics not computed: {e}"));
                    None
                }
            }
        };
        let (runoff_averages, runoff_reductions) = if runoff.is_empty() {
            (None, None)
        } else {
            (Some(runoff_averages(&runoff)?), Some(aggregate_reductions(&runoff)?))
        };
        Ok(Self {
            provenance,
            strips: Vec::new(),
            trials,
            average,
            statistics,
            runoff,
            runoff_averages,
            runoff_reductions,
            runoff_model: Vec::new(),
            comparison: Vec::new(),
            notes,
        })
    }

    /// Appends comparison rows against the published reference values,
    /// plus notes on the known disagreements.
    pub fn compare_with_reference(&mut self, config: Option<&RunConfig>) {
        let mut rows = Vec::new();
        if let Some(a) = &self.average {
            let r = reference::AVERAGES;
            let pct = |x: Option<f64>| x.map(|v| v * 100.0);
            rows.push(ComparisonRow::new("average", "blanket hit rate (%)", pct(a.hit_rate_blanket), r.hit_rate_blanket_pct));
            rows.push(ComparisonRow::new("average", "spot hit rate (%)", pct(a.hit_rate_spot), r.hit_rate_spot_pct));
            rows.push(ComparisonRow::new("average", "blanket usage (L/ha)", Some(a.usage_blanket), r.usage_blanket));
            rows.push(ComparisonRow::new("average", "spot usage (L/ha)", Some(a.usage_spot), r.usage_spot));
            rows.push(ComparisonRow::new("average", "efficacy (%)", pct(a.efficacy), r.efficacy_pct));
            rows.push(ComparisonRow::new("average", "usage reduction (%)", Some(a.usage_reduction * 100.0), r.usage_reduction_pct));
        }
        for t in &self.trials {
            if let Some(p) = reference::TRIALS.iter().find(|p| p.trial_id == t.trial_id) {
                let section = format!("trial {}", t.trial_id);
                if let Some(e) = p.efficacy_pct {
                    rows.push(ComparisonRow::new(&section, "efficacy (%)", t.efficacy.map(|x| x * 100.0), e));
                }
                rows.push(ComparisonRow::new(&section, "usage reduction (%)", Some(t.usage_reduction * 100.0), p.usage_reduction_pct));
            }
        }
        if let Some(s) = &self.statistics {
            let r = reference::STATISTICS;
            rows.push(ComparisonRow::new("statistics", "spot usage mean (L/ha)", Some(s.usage_spot.mean), r.usage_spot_mean));
            rows.push(ComparisonRow::new("statistics", "spot usage sd (L/ha)", Some(s.usage_spot.sd), r.usage_spot_sd));
            rows.push(ComparisonRow::new("statistics", "blanket usage mean (L/ha)", Some(s.usage_blanket.mean), r.usage_blanket_mean));
            rows.push(ComparisonRow::new("statistics", "blanket usage sd (L/ha)", Some(s.usage_blanket.sd), r.usage_blanket_sd));
            rows.push(ComparisonRow::new("statistics", "usage t (Welch)", Some(s.welch.statistic), r.usage_t));
            rows.push(ComparisonRow::new("statistics", "usage p (Welch)", Some(s.welch.p_value), r.usage_p));
            rows.push(ComparisonRow::new("statistics", "usage t (paired)", s.paired.map(|x| x.statistic), r.usage_t));
            rows.push(ComparisonRow::new("statistics", "usage p (paired)", s.paired.map(|x| x.p_value), r.usage_p));
            rows.push(ComparisonRow::new("statistics", "spot knockdown mean (%)", s.knockdown_spot.map(|k| k.mean), r.knockdown_spot_mean));
            rows.push(ComparisonRow::new("statistics", "spot knockdown sd (%)", s.knockdown_spot.map(|k| k.sd), r.knockdown_spot_sd));
            rows.push(ComparisonRow::new("statistics", "blanket knockdown mean (%)", s.knockdown_blanket.map(|k| k.mean), r.knockdown_blanket_mean));
            rows.push(ComparisonRow::new("statistics", "blanket knockdown sd (%)", s.knockdown_blanket.map(|k| k.sd), r.knockdown_blanket_sd));
            rows.push(ComparisonRow::new("statistics", "density-usage r", s.density_usage_r, r.density_usage_r));
            self.statistics_notes(s.clone());
        }
        if let (Some(a), Some(g)) = (&self.runoff_averages, &self.runoff_reductions) {
            let r = reference::RUNOFF_AVERAGES;
            rows.push(ComparisonRow::new("runoff", "blanket concentration (ug/L)", Some(a.blanket_concentration_ugl), r.blanket_concentration_ugl));
            rows.push(ComparisonRow::new("runoff", "blanket load (g/ha)", Some(a.blanket_load_g_per_ha), r.blanket_load_g_per_ha));
            rows.push(ComparisonRow::new("runoff", "spot concentration (ug/L)", Some(a.spot_concentration_ugl), r.spot_concentration_ugl));
            rows.push(ComparisonRow::new("runoff", "spot load (g/ha)", Some(a.spot_load_g_per_ha), r.spot_load_g_per_ha));
            rows.push(ComparisonRow::new("runoff", "concentration reduction (%)", Some(g.concentration * 100.0), r.concentration_reduction_pct));
            rows.push(ComparisonRow::new("runoff", "load reduction (%)", Some(g.load * 100.0), r.load_reduction_pct));
        }
        for pair in &self.runoff {
            if let Some(p) = reference::RUNOFF_ROWS
                .iter()
                .find(|p| p.trial_id == pair.trial_id && p.ingredient == pair.active_ingredient)
            {
                let section = format!("runoff trial {} {}", p.trial_id, p.ingredient);
                rows.push(ComparisonRow::new(&section, "concentration reduction (%)", pair.concentration_reduction().ok().map(|x| x * 100.0), p.concentration_reduction_pct));
                rows.push(ComparisonRow::new(&section, "load reduction (%)", pair.load_reduction().ok().map(|x| x * 100.0), p.load_reduction_pct));
            }
        }
        if let Some(c) = config {
            let t = reference::TIMING;
            let lat = &c.pass.latency;
            let speed = c.pass.speed;
            let latency = lat.total_mean_ms();
            rows.push(ComparisonRow::new("timing", "total latency mean (ms)", Some(latency), t.total_latency_ms));
            rows.push(ComparisonRow::new("timing", "total latency sd (ms)", Some(lat.total_sd_ms()), t.total_latency_sd_ms));
            rows.push(ComparisonRow::new("timing", "displacement during latency (mm)", displacement_during(speed, latency).ok(), t.displacement_mm));
            let duration = c.pass.spray_duration.resolve(speed).ok();
            rows.push(ComparisonRow::new("timing", "spray duration (s)", duration.map(|d| d / 1000.0), t.spray_duration_s));
            rows.push(ComparisonRow::new(
                "timing",
                "spray section length (m)",
                duration.and_then(|d| spray_section_length(speed, d / 1000.0).ok()),
                t.section_length_m,
            ));
            rows.push(ComparisonRow::new("timing", "frame rate (fps)", Some(1000.0 / c.pass.camera.frame_period_ms), t.frame_rate_fps));
            rows.push(ComparisonRow::new("timing", "speed (km/h)", Some(speed.kmh()), t.speed_kmh));
        }
        if rows.iter().any(|r| r.matches == Some(false)) {
            self.notes.push(format!(
                "comparison rows marked `no` differ from the {} after rounding to its printed precision",
                reference::LABEL
            ));
        }
        self.comparison = rows;
    }

    fn statistics_notes(&mut self, s: UsageStatistics) {
        let r = reference::STATISTICS;
        let paired = s.paired.map_or("n/a".to_string(), |p| format!("{:.4}", p.statistic));
        self.notes.push(format!(
            "usage t-statistic: the {} gives t = {:.4} (described as a paired test); \
             recomputed from the per-trial usage, Welch's t = {:.4} and the paired t = {}; \
             neither matches",
            reference::LABEL,
            r.usage_t.value,
            s.welch.statistic,
            paired
        ));
        if let Ok(w) = welch_t_from_summary(
            r.usage_spot_mean.value,
            r.usage_spot_sd.value,
            r.trials,
            r.usage_blanket_mean.value,
            r.usage_blanket_sd.value,
            r.trials,
        ) {
            self.notes.push(format!(
                "Welch's t from the rounded published means and SDs ({} ± {} vs {} ± {}, n = {}) is {:.4} (p = {:.4})",
                r.usage_spot_mean.value,
                r.usage_spot_sd.value,
                r.usage_blanket_mean.value,
                r.usage_blanket_sd.value,
                r.trials,
                w.statistic,
                w.p_value
            ));
        }
        if let Some(k) = s.knockdown_spot {
            if k.n < r.trials {
                self.notes.push(format!(
                    "knockdown statistics here cover the {} trials with a knockdown assessment; \
                     the published figures ({} / {}) imply {} values",
                    k.n, r.knockdown_spot_mean.value, r.knockdown_blanket_mean.value, r.trials
                ));
            }
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let p = &self.provenance;
        let _ = writeln!(out, "Spot spraying trial report");
        let _ = write!(out, "tool {}", p.tool_version);
        if let Some(seed) = p.seed {
            let _ = write!(out, " | seed {seed}");
        }
        if let Some(h) = &p.config_sha256 {
            let _ = write!(out, " | config sha256 {h}");
        }
        let _ = writeln!(out);
        for i in &p.inputs {
            let _ = writeln!(out, "input {} sha256 {}", i.name, i.sha256);
        }

        if !self.strips.is_empty() {
            let _ = writeln!(out, "\nSimulated strips");
            let _ = writeln!(
                out,
                "{:<10} {:>5} {:<8} {:>7} {:>7} {:>7} {:>7} {:>9} {:>8} {:>7}",
                "trial", "strip", "treat", "area ha", "weeds", "hit %", "L/ha", "density", "events", "sprayed"
            );
            for s in &self.strips {
                let _ = writeln!(
                    out,
                    "{:<10} {:>5} {:<8} {:>7.3} {:>7} {:>7} {:>7.1} {:>9.4} {:>8} {:>7.3}",
                    s.trial_id,
                    s.strip,
                    s.treatment.as_str(),
                    s.area_ha,
                    s.weeds,
                    pct_cell(s.hit_rate),
                    s.usage_l_per_ha,
                    s.weed_density,
                    s.spray_events,
                    s.sprayed_distance_fraction
                );
            }
        }

        if !self.trials.is_empty() {
            let _ = writeln!(out, "\nKnockdown efficacy and herbicide usage");
            let _ = writeln!(
                out,
                "{:<10} {:>13} {:>10} {:>13} {:>10} {:>11} {:>12}",
                "trial", "blanket hit %", "spot hit %", "blanket L/ha", "spot L/ha", "efficacy %", "reduction %"
            );
            for t in &self.trials {
                let _ = writeln!(
                    out,
                    "{:<10} {:>13} {:>10} {:>13.1} {:>10.1} {:>11} {:>12}",
                    t.trial_id,
                    pct_cell(t.hit_rate_blanket),
                    pct_cell(t.hit_rate_spot),
                    t.blanket.usage_l_per_ha,
                    t.spot.usage_l_per_ha,
                    pct_cell(t.efficacy),
                    round_percent(t.usage_reduction)
                );
            }
            if let Some(a) = &self.average {
                let _ = writeln!(
                    out,
                    "{:<10} {:>13} {:>10} {:>13.1} {:>10.1} {:>11} {:>12}",
                    "average",
                    pct_cell(a.hit_rate_blanket),
                    pct_cell(a.hit_rate_spot),
                    a.usage_blanket,
                    a.usage_spot,
                    pct_cell(a.efficacy),
                    round_percent(a.usage_reduction)
                );
            }
        }

        if let Some(s) = &self.statistics {
            let _ = writeln!(out, "\nStatistics across {} trials", s.usage_spot.n);
            let _ = writeln!(out, "{:<16} {:>10} {:>8} {:>13} {:>8}", "metric", "spot mean", "sd", "blanket mean", "sd");
            let _ = writeln!(
                out,
                "{:<16} {:>10.2} {:>8.2} {:>13.2} {:>8.2}",
                "usage (L/ha)", s.usage_spot.mean, s.usage_spot.sd, s.usage_blanket.mean, s.usage_blanket.sd
            );
            if let (Some(ks), Some(kb)) = (s.knockdown_spot, s.knockdown_blanket) {
                let _ = writeln!(
                    out,
                    "{:<16} {:>10.2} {:>8.2} {:>13.2} {:>8.2}",
                    "knockdown (%)", ks.mean, ks.sd, kb.mean, kb.sd
                );
            }
            let _ = writeln!(
                out,
                "Welch t = {:.4}, df = {:.3}, p = {:.4}",
                s.welch.statistic, s.welch.degrees_of_freedom, s.welch.p_value
            );
            match &s.paired {
                Some(pt) => {
                    let _ = writeln!(
                        out,
                        "paired t = {:.4}, df = {}, p = {:.4}",
                        pt.statistic, pt.degrees_of_freedom, pt.p_value
                    );
                }
                None => {
                    let _ = writeln!(out, "paired t = n/a");
                }
            }
            let _ = writeln!(
                out,
                "density-usage r = {}",
                s.density_usage_r.map_or("n/a".to_string(), |r| format!("{r:.4}"))
            );
        }

        if !self.runoff.is_empty() {
            let _ = writeln!(out, "\nRunoff water quality");
            runoff_table(&mut out, &self.runoff, self.runoff_averages.as_ref(), self.runoff_reductions.as_ref());
        }

        if !self.runoff_model.is_empty() {
            let _ = writeln!(out, "\nModelled runoff (proportional to applied herbicide)");
            let pairs: Vec<RunoffPair> = self.runoff_model.iter().map(|m| m.pair.clone()).collect();
            runoff_table(&mut out, &pairs, None, None);
        }

        if !self.comparison.is_empty() {
            let _ = writeln!(out, "\nComparison with the {}", reference::LABEL);
            let _ = writeln!(
                out,
                "{:<32} {:<34} {:>12} {:>12} {:>10} {:>5}",
                "section", "quantity", "computed", "published", "delta", "match"
            );
            for r in &self.comparison {
                let d = r.decimals + 2;
                let _ = writeln!(
                    out,
                    "{:<32} {:<34} {:>12} {:>12.*} {:>10} {:>5}",
                    r.section,
                    r.quantity,
                    r.computed.map_or("n/a".into(), |c| format!("{c:.d$}")),
                    r.decimals,
                    r.published,
                    r.delta.map_or("n/a".into(), |x| format!("{x:+.d$}")),
                    match r.matches {
                        Some(true) => "yes",
                        Some(false) => "no",
                        None => "n/a",
                    }
                );
            }
        }

        let notes: Vec<&String> = self
            .notes
            .iter()
            .chain(self.statistics.iter().flat_map(|s| s.notes.iter()))
            .collect();
        if !notes.is_empty() {
            let _ = writeln!(out, "\nNotes");
            for n in notes {
                let _ = writeln!(out, "- {n}");
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| Error::Domain(format!("report serialisation failed: {e}")))
    }

    /// The report as named CSV tables; empty sections are omitted.
    pub fn to_csv_tables(&self) -> Vec<(&'static str, String)> {
        let mut tables = Vec::new();
        if !self.strips.is_empty() {
            let mut s = String::from(
                "trial,strip,treatment,area_ha,weeds,weeds_sprayed,weeds_missed,hit_rate,usage_l_ha,images_total,images_with_detection,weed_density,spray_events,sprayed_distance_fraction\n",
            );
            for r in &self.strips {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    csv_text(&r.trial_id),
                    r.strip,
                    r.treatment,
                    r.area_ha,
                    r.weeds,
                    r.weeds_sprayed,
                    r.weeds_missed,
                    opt(r.hit_rate),
                    r.usage_l_per_ha,
                    r.images_total,
                    r.images_with_detection,
                    r.weed_density,
                    r.spray_events,
                    r.sprayed_distance_fraction
                );
            }
            tables.push(("strips.csv", s));
        }
        if !self.trials.is_empty() {
            let mut s = String::from(
                "trial,hit_rate_blanket,hit_rate_spot,usage_blanket_l_ha,usage_spot_l_ha,efficacy,usage_reduction\n",
            );
            for t in &self.trials {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    csv_text(&t.trial_id),
                    opt(t.hit_rate_blanket),
                    opt(t.hit_rate_spot),
                    t.blanket.usage_l_per_ha,
                    t.spot.usage_l_per_ha,
                    opt(t.efficacy),
                    t.usage_reduction
                );
            }
            if let Some(a) = &self.average {
                let _ = writeln!(
                    s,
                    "average,{},{},{},{},{},{}",
                    opt(a.hit_rate_blanket),
                    opt(a.hit_rate_spot),
                    a.usage_blanket,
                    a.usage_spot,
                    opt(a.efficacy),
                    a.usage_reduction
                );
            }
            tables.push(("summary.csv", s));
        }
        if let Some(st) = &self.statistics {
            let mut s = String::from("metric,test,spot_mean,spot_sd,blanket_mean,blanket_sd,n,statistic,df,p_value\n");
            let base = format!(
                "{},{},{},{},{}",
                st.usage_spot.mean, st.usage_spot.sd, st.usage_blanket.mean, st.usage_blanket.sd, st.usage_spot.n
            );
            let _ = writeln!(
                s,
                "usage_l_ha,welch,{base},{},{},{}",
                st.welch.statistic, st.welch.degrees_of_freedom, st.welch.p_value
            );
            match &st.paired {
                Some(p) => {
                    let _ = writeln!(s, "usage_l_ha,paired,{base},{},{},{}", p.statistic, p.degrees_of_freedom, p.p_value);
                }
                None => {
                    let _ = writeln!(s, "usage_l_ha,paired,{base},,,");
                }
            }
            if let (Some(ks), Some(kb)) = (st.knockdown_spot, st.knockdown_blanket) {
                let _ = writeln!(s, "knockdown_pct,,{},{},{},{},{},,,", ks.mean, ks.sd, kb.mean, kb.sd, ks.n);
            }
            let _ = writeln!(s, "density_vs_usage,pearson,,,,,,{},,", opt(st.density_usage_r));
            tables.push(("statistics.csv", s));
        }
        if !self.runoff.is_empty() {
            tables.push(("runoff.csv", runoff_csv(&self.runoff, self.runoff_averages.as_ref(), self.runoff_reductions.as_ref())));
        }
        if !self.runoff_model.is_empty() {
            let pairs: Vec<RunoffPair> = self.runoff_model.iter().map(|m| m.pair.clone()).collect();
            tables.push(("runoff_model.csv", runoff_csv(&pairs, None, None)));
        }
        if !self.comparison.is_empty() {
            let mut s = String::from("section,quantity,computed,published,decimals,delta,matches\n");
            for r in &self.comparison {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    csv_text(&r.section),
                    csv_text(&r.quantity),
                    opt(r.computed),
                    r.published,
                    r.decimals,
                    opt(r.delta),
                    opt(r.matches)
                );
            }
            tables.push(("comparison.csv", s));
        }
        tables
    }
}

fn pct_cell(x: Option<f64>) -> String {
    x.map_or("-".to_string(), |v| round_percent(v).to_string())
}

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn runoff_table(out: &mut String, pairs: &[RunoffPair], avg: Option<&RunoffAverages>, red: Option<&AggregateReductions>) {
    let _ = writeln!(
        out,
        "{:<10} {:<18} {:>11} {:>11} {:>11} {:>11} {:>8} {:>8}",
        "trial", "ingredient", "B ug/L", "B g/ha", "S ug/L", "S g/ha", "conc %", "load %"
    );
    for p in pairs {
        let _ = writeln!(
            out,
            "{:<10} {:<18} {:>11.2} {:>11.2} {:>11.2} {:>11.2} {:>8} {:>8}",
            p.trial_id,
            p.active_ingredient,
            p.blanket_concentration_ugl,
            p.blanket_load_g_per_ha,
            p.spot_concentration_ugl,
            p.spot_load_g_per_ha,
            pct_cell(p.concentration_reduction().ok()),
            pct_cell(p.load_reduction().ok())
        );
    }
    if let (Some(a), Some(r)) = (avg, red) {
        let _ = writeln!(
            out,
            "{:<10} {:<18} {:>11.2} {:>11.2} {:>11.2} {:>11.2} {:>8} {:>8}",
            "average",
            "",
            a.blanket_concentration_ugl,
            a.blanket_load_g_per_ha,
            a.spot_concentration_ugl,
            a.spot_load_g_per_ha,
            round_percent(r.concentration),
            round_percent(r.load)
        );
    }
}

fn runoff_csv(pairs: &[RunoffPair], avg: Option<&RunoffAverages>, red: Option<&AggregateReductions>) -> String {
    let mut s = String::from(
        "trial,ingredient,blanket_conc_ugL,blanket_load_gha,spot_conc_ugL,spot_load_gha,concentration_reduction,load_reduction\n",
    );
    for p in pairs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            csv_text(&p.trial_id),
            csv_text(&p.active_ingredient),
            p.blanket_concentration_ugl,
            p.blanket_load_g_per_ha,
            p.spot_concentration_ugl,
            p.spot_load_g_per_ha,
            opt(p.concentration_reduction().ok()),
            opt(p.load_reduction().ok())
        );
    }
    if let (Some(a), Some(r)) = (avg, red) {
        let _ = writeln!(
            s,
            "average,,{},{},{},{},{},{}",
            a.blanket_concentration_ugl,
            a.blanket_load_g_per_ha,
            a.spot_concentration_ugl,
            a.spot_load_g_per_ha,
            r.concentration,
            r.load
        );
    }
    s
}
