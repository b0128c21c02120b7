//! One sprayer pass over a treatment strip.
//!
//! Every row of the strip has its own camera centred on the row, split into
//! two inference tiles that each drive one nozzle. The camera starts half a
//! footprint before the strip so that weeds at the very start are seen
//! early enough, and keeps running until the strip end has left the frame.
//! Nozzle output is gated to the strip's along-track extent.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::latency::{sample_total_latency, LatencyProfile};
use super::nozzle::{Nozzle, SprayEvent};
use crate::detector::{classify_tile, ConfusionMatrix, DetectionRecord, DetectorProfile};
use crate::error::{Error, Result};
use crate::fieldgen::{SpeciesClass, Strip, Treatment, WeedInstance};
use crate::geometry::{CameraConfig, Speed, TileGrid, VehicleState};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SprayDuration {
    Fixed { ms: f64 },
    /// `reference_ms` at `reference_speed_kmh`, scaled inversely with speed so
    /// the sprayed section length stays constant.
    SpeedScaled {
        reference_ms: f64,
        reference_speed_kmh: f64,
    },
}

impl Default for SprayDuration {
    fn default() -> Self {
        Self::SpeedScaled {
            reference_ms: 450.0,
            reference_speed_kmh: 8.0,
        }
    }
}

impl SprayDuration {
    pub fn resolve(&self, speed: Speed) -> Result<f64> {
        let ms = match *self {
            Self::Fixed { ms } => ms,
            Self::SpeedScaled {
                reference_ms,
                reference_speed_kmh,
            } => {
                if !(speed.kmh() > 0.0) {
                    return Err(Error::Domain(
                        "speed-scaled spray duration needs a moving vehicle".into(),
                    ));
                }
                reference_ms * reference_speed_kmh / speed.kmh()
            }
        };
        if !(ms > 0.0) || !ms.is_finite() {
            return Err(Error::Domain(format!("spray duration must be > 0 ms, got {ms}")));
        }
        Ok(ms)
    }
}

/// Per-nozzle flow (L/s) that delivers `rate_l_per_ha` when the nozzle is
/// held open over a band `tile_width_m` wide at `speed`.
pub fn calibrated_flow_rate(rate_l_per_ha: f64, tile_width_m: f64, speed: Speed) -> Result<f64> {
    if !(rate_l_per_ha > 0.0) || !(tile_width_m > 0.0) || !(speed.mps() > 0.0) {
        return Err(Error::Domain(
            "flow calibration needs positive rate, tile width and speed".into(),
        ));
    }
    Ok(rate_l_per_ha / 10_000.0 * tile_width_m * speed.mps())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassConfig {
    pub camera: CameraConfig,
    pub grid: TileGrid,
    pub detector: DetectorProfile,
    pub latency: LatencyProfile,
    pub speed: Speed,
    pub spray_duration: SprayDuration,
    pub flow_rate_lps: f64,
}

impl PassConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.detector.validate()?;
        self.latency.validate()?;
        self.spray_duration.resolve(self.speed)?;
        if !(self.speed.mps() > 0.0) {
            return Err(Error::Domain("a pass needs a moving vehicle".into()));
        }
        if !(self.flow_rate_lps > 0.0) {
            return Err(Error::Domain("nozzle flow rate must be > 0".into()));
        }
        let fov = self.camera.fov_width()?;
        if self.grid.total_width() > fov * (1.0 + 1e-9) {
            return Err(Error::InvalidGeometry(format!(
                "tiles span {} m but the camera sees only {fov} m",
                self.grid.total_width()
            )));
        }
        Ok(())
    }
}

/// Cross-track layout of cameras, tiles and nozzles for one strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassGeometry {
    pub cross_offset_m: f64,
    pub row_width_m: f64,
    pub rows: usize,
    pub length_m: f64,
    pub grid: TileGrid,
}

impl PassGeometry {
    pub fn new(strip: &Strip, grid: &TileGrid) -> Result<Self> {
        if grid.total_width() > strip.row_width_m * (1.0 + 1e-9) {
            return Err(Error::ConfigMismatch(format!(
                "tile grid ({} m) is wider than a row ({} m); adjacent cameras would overlap",
                grid.total_width(),
                strip.row_width_m
            )));
        }
        Ok(Self {
            cross_offset_m: strip.cross_offset_m,
            row_width_m: strip.row_width_m,
            rows: strip.rows_per_strip,
            length_m: strip.length_m,
            grid: grid.clone(),
        })
    }

    pub fn nozzle_count(&self) -> usize {
        self.rows * TileGrid::TILES_PER_CAMERA
    }

    fn row_centre(&self, row: usize) -> f64 {
        self.cross_offset_m + (row as f64 + 0.5) * self.row_width_m
    }

    /// Global tile index (row-major) under a cross-track coordinate.
    pub fn tile_for(&self, cross_m: f64) -> Option<usize> {
        let rel = (cross_m - self.cross_offset_m) / self.row_width_m;
        if !(rel >= 0.0) || rel >= self.rows as f64 {
            return None;
        }
        let row = (rel.floor() as usize).min(self.rows - 1);
        let offset = cross_m - self.row_centre(row);
        let tiles = self.grid.tiles();
        let (lo, hi) = (tiles[0].cross_min, tiles[tiles.len() - 1].cross_max);
        let eps = 1e-9 * self.row_width_m;
        let offset = if offset < lo && offset > lo - eps {
            lo
        } else if offset > hi && offset < hi + eps {
            hi
        } else {
            offset
        };
        self.grid
            .tile_of(offset)
            .map(|t| row * TileGrid::TILES_PER_CAMERA + t)
    }

    pub fn nozzle_of_tile(&self, global_tile: usize) -> usize {
        let per = TileGrid::TILES_PER_CAMERA;
        (global_tile / per) * per + self.grid.nozzle_of_tile(global_tile % per)
    }

    pub fn nozzle_for(&self, cross_m: f64) -> Option<usize> {
        self.tile_for(cross_m).map(|t| self.nozzle_of_tile(t))
    }

    /// Cross-track ground span of a nozzle (the span of its tile).
    pub fn nozzle_span(&self, nozzle: usize) -> (f64, f64) {
        let per = TileGrid::TILES_PER_CAMERA;
        let row = nozzle / per;
        let local = (0..per)
            .find(|&t| self.grid.nozzle_of_tile(t) == nozzle % per)
            .expect("bijective tile mapping");
        let span = self.grid.tiles()[local];
        let c = self.row_centre(row);
        (c + span.cross_min, c + span.cross_max)
    }

    pub fn contains(&self, along_m: f64, cross_m: f64) -> bool {
        along_m >= 0.0
            && along_m <= self.length_m
            && cross_m >= self.cross_offset_m
            && cross_m < self.cross_offset_m + self.rows as f64 * self.row_width_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassLog {
    pub strip_index: usize,
    pub treatment: Treatment,
    pub speed_mps: f64,
    pub spray_duration_ms: f64,
    pub flow_rate_lps: f64,
    /// Distance travelled by the camera over the pass, run-in included.
    pub distance_m: f64,
    pub area_ha: f64,
    pub geometry: PassGeometry,
    pub frames: u64,
    /// Camera frames (both tiles together) and those with any positive tile.
    pub images_total: u64,
    pub images_with_detection: u64,
    pub confusion: [ConfusionMatrix; SpeciesClass::COUNT],
    /// Tile views that were positive or had a weed in them; empty negative
    /// views are only counted, not stored.
    pub detections: Vec<DetectionRecord>,
    pub spray_events: Vec<SprayEvent>,
}

impl PassLog {
    pub fn total_volume_l(&self) -> f64 {
        self.spray_events.iter().map(|e| e.volume_l).sum()
    }

    pub fn usage_l_per_ha(&self) -> Result<f64> {
        usage_l_per_ha(self, self.area_ha)
    }

    pub fn weed_density(&self) -> Result<f64> {
        crate::analysis::weed_density(self.images_with_detection, self.images_total)
    }

    /// Share of the nozzle-distance (nozzles × strip length) that was sprayed.
    pub fn sprayed_distance_fraction(&self) -> f64 {
        let sprayed: f64 = self
            .spray_events
            .iter()
            .map(|e| {
                let (a, b) = e.along_interval(self.speed_mps);
                b - a
            })
            .sum();
        sprayed / (self.geometry.nozzle_count() as f64 * self.geometry.length_m)
    }

    pub fn confusion_total(&self) -> ConfusionMatrix {
        let mut total = ConfusionMatrix::default();
        for c in &self.confusion {
            total.merge(c);
        }
        total
    }
}

/// Σ volume / area.
pub fn usage_l_per_ha(log: &PassLog, area_ha: f64) -> Result<f64> {
    if !(area_ha > 0.0) {
        return Err(Error::Domain(format!("area must be > 0 ha, got {area_ha}")));
    }
    Ok(log.total_volume_l() / area_ha)
}

fn clip_to_strip(
    event: SprayEvent,
    vehicle: &VehicleState,
    length_m: f64,
) -> Option<SprayEvent> {
    let v = vehicle.speed.mps();
    let (a, b) = event.along_interval(v);
    if a >= 0.0 && b <= length_m {
        return Some(event);
    }
    let (ca, cb) = (a.max(0.0), b.min(length_m));
    if cb <= ca {
        return None;
    }
    let on = vehicle.time_at(ca)?;
    let off = vehicle.time_at(cb)?;
    let flow = event.volume_l / (event.duration_ms / 1000.0);
    Some(SprayEvent::from_interval(event.nozzle_id, on, off, flow, vehicle))
}

pub fn simulate_pass(
    weeds: &[WeedInstance],
    strip: &Strip,
    config: &PassConfig,
    seed: u64,
) -> Result<PassLog> {
    config.validate()?;
    let geometry = PassGeometry::new(strip, &config.grid)?;
    let spray_duration_ms = config.spray_duration.resolve(config.speed)?;
    let footprint = config.camera.along_track_footprint_m;
    let half = footprint / 2.0;
    let vehicle = VehicleState {
        along_track_position_m: -half,
        speed: config.speed,
        row_index: 0,
    };
    let n_tiles = geometry.nozzle_count();

    // Weeds per tile, sorted along-track, scanned with a sliding window.
    let mut by_tile: Vec<Vec<&WeedInstance>> = vec![Vec::new(); n_tiles];
    for w in weeds.iter().filter(|w| geometry.contains(w.along_m, w.cross_m)) {
        if let Some(t) = geometry.tile_for(w.cross_m) {
            by_tile[t].push(w);
        }
    }
    for list in &mut by_tile {
        list.sort_by(|a, b| a.along_m.total_cmp(&b.along_m).then(a.id.cmp(&b.id)));
    }
    let mut window = vec![(0usize, 0usize); n_tiles];

    let mut det_rng = substream(seed, Purpose::Detector, strip.index as u64);
    let mut lat_rng = substream(seed, Purpose::Latency, strip.index as u64);
    let mut nozzles: Vec<Nozzle> = (0..n_tiles)
        .map(|id| Nozzle::new(id, config.flow_rate_lps))
        .collect::<Result<_>>()?;

    let mut detections = Vec::new();
    let mut events = Vec::new();
    let mut confusion = [ConfusionMatrix::default(); SpeciesClass::COUNT];
    let (mut images_total, mut images_with_detection) = (0u64, 0u64);
    let spot = strip.treatment == Treatment::Spot;
    let period = config.camera.frame_period_ms;
    let per = TileGrid::TILES_PER_CAMERA;

    let mut frame = 0u64;
    loop {
        let t = frame as f64 * period;
        let x = vehicle.position_at(t);
        if x - half > strip.length_m {
            break;
        }
        let (lo_edge, hi_edge) = (x - half, x + half);
        for row in 0..geometry.rows {
            let degraded = det_rng.random::<f64>() < config.detector.exposure.event_probability;
            let mut frame_positive = false;
            for local in 0..per {
                let tile = row * per + local;
                let list = &by_tile[tile];
                let (lo, hi) = &mut window[tile];
                while *hi < list.len() && list[*hi].along_m <= hi_edge {
                    *hi += 1;
                }
                while *lo < *hi && list[*lo].along_m < lo_edge {
                    *lo += 1;
                }
                let mut truth = [false; SpeciesClass::COUNT];
                let mut ids = Vec::new();
                for w in &list[*lo..*hi] {
                    ids.push(w.id);
                    let visible = w.detectability >= 1.0 || det_rng.random::<f64>() < w.detectability;
                    if visible {
                        truth[w.species.index()] = true;
                    }
                }
                let predicted = classify_tile(&truth, &config.detector, degraded, &mut det_rng);
                for class in 0..SpeciesClass::COUNT {
                    if config.detector.targets[class] {
                        confusion[class].record(truth[class], predicted[class]);
                    }
                }
                let positive = predicted.iter().any(|&p| p);
                if positive || !ids.is_empty() {
                    detections.push(DetectionRecord {
                        frame_id: frame,
                        tile_id: tile,
                        timestamp_ms: t,
                        predicted,
                        truth_weed_ids: ids,
                    });
                }
                if positive {
                    frame_positive = true;
                    if spot {
                        let latency = sample_total_latency(&config.latency, &mut lat_rng);
                        let nozzle = &mut nozzles[geometry.nozzle_of_tile(tile)];
                        if let Some(e) = nozzle.schedule(t, latency, spray_duration_ms, &vehicle)? {
                            events.push(e);
                        }
                    }
                }
            }
            images_total += 1;
            images_with_detection += u64::from(frame_positive);
        }
        frame += 1;
    }
    let last_x = vehicle.position_at(frame.saturating_sub(1) as f64 * period);

    if spot {
        events.extend(nozzles.iter_mut().filter_map(|n| n.finish(&vehicle)));
        events = events
            .into_iter()
            .filter_map(|e| clip_to_strip(e, &vehicle, strip.length_m))
            .collect();
    } else {
        let on = vehicle.time_at(0.0).expect("moving vehicle");
        let off = vehicle.time_at(strip.length_m).expect("moving vehicle");
        events = (0..n_tiles)
            .map(|id| SprayEvent::from_interval(id, on, off, config.flow_rate_lps, &vehicle))
            .collect();
    }
    events.sort_by(|a, b| {
        a.start_time_ms
            .total_cmp(&b.start_time_ms)
            .then(a.nozzle_id.cmp(&b.nozzle_id))
    });

    Ok(PassLog {
        strip_index: strip.index,
        treatment: strip.treatment,
        speed_mps: config.speed.mps(),
        spray_duration_ms,
        flow_rate_lps: config.flow_rate_lps,
        distance_m: last_x - vehicle.along_track_position_m,
        area_ha: strip.area_ha,
        geometry,
        frames: frame,
        images_total,
        images_with_detection,
        confusion,
        detections,
        spray_events: events,
    })
}

/// Simulates every strip of a trial, in parallel, returning logs in strip order.
pub fn simulate_trial(
    weeds: &[WeedInstance],
    strips: &[Strip],
    config: &PassConfig,
    seed: u64,
) -> Result<Vec<PassLog>> {
    strips
        .par_iter()
        .map(|strip| simulate_pass(weeds, strip, config, seed))
        .collect()
}

/// Weeds of one strip split by whether any activation of their nozzle
/// passed over them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub sprayed: Vec<u64>,
    pub missed: Vec<u64>,
}

impl Coverage {
    pub fn hit_rate(&self) -> Result<f64> {
        crate::analysis::hit_rate(self.sprayed.len() as u64, self.missed.len() as u64)
    }
}

pub fn coverage_hits(weeds: &[WeedInstance], log: &PassLog) -> Coverage {
    let geometry = &log.geometry;
    let mut intervals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); geometry.nozzle_count()];
    for e in &log.spray_events {
        if let Some(list) = intervals.get_mut(e.nozzle_id) {
            list.push(e.along_interval(log.speed_mps));
        }
    }
    for list in &mut intervals {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut coverage = Coverage::default();
    for w in weeds.iter().filter(|w| geometry.contains(w.along_m, w.cross_m)) {
        let hit = geometry.nozzle_for(w.cross_m).is_some_and(|n| {
            let list = &intervals[n];
            let idx = list.partition_point(|iv| iv.0 <= w.along_m);
            idx > 0 && list[idx - 1].1 >= w.along_m
        });
        if hit {
            coverage.sprayed.push(w.id);
        } else {
            coverage.missed.push(w.id);
        }
    }
    coverage
}
