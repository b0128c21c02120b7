//! Spray maps: one LineString per nozzle activation, drawn along the
//! centre line of the nozzle's tile.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::controller::PassLog;
use crate::error::{Error, Result};

/// Mean Earth radius (m).
const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Where field coordinate (0, 0) lies and which way the vehicle travels.
/// Cross-track offsets increase to the right of the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// Direction of travel, degrees clockwise from north.
    #[serde(default)]
    pub heading_deg: f64,
}

impl GeoOrigin {
    pub fn validate(&self) -> Result<()> {
        if !(self.lat_deg.abs() < 90.0) || !(self.lon_deg.abs() <= 180.0) || !self.heading_deg.is_finite() {
            return Err(Error::config(
                "geo",
                "lat_deg must be in (-90, 90), lon_deg in [-180, 180], heading finite",
            ));
        }
        Ok(())
    }

    /// (lon, lat) of a field point: the great-circle destination from the
    /// origin, so distances from the origin are exact on the sphere.
    pub fn project(&self, along_m: f64, cross_m: f64) -> (f64, f64) {
        let d = along_m.hypot(cross_m) / EARTH_RADIUS_M;
        if d == 0.0 {
            return (self.lon_deg, self.lat_deg);
        }
        let bearing = self.heading_deg.to_radians() + cross_m.atan2(along_m);
        let (p1, l1) = (self.lat_deg.to_radians(), self.lon_deg.to_radians());
        let p2 = (p1.sin() * d.cos() + p1.cos() * d.sin() * bearing.cos()).asin();
        let l2 = l1 + (bearing.sin() * d.sin() * p1.cos()).atan2(d.cos() - p1.sin() * p2.sin());
        (l2.to_degrees(), p2.to_degrees())
    }
}

/// A FeatureCollection with one LineString per spray event across all
/// passes. Blanket strips come out as one continuous line per nozzle,
/// spot strips as separate segments.
pub fn emit_spray_map(logs: &[PassLog], origin: Option<&GeoOrigin>) -> Result<Value> {
    let origin = origin.ok_or_else(|| {
        Error::config("geo", "a spray map needs a geo origin (lat_deg, lon_deg)")
    })?;
    origin.validate()?;
    let mut features = Vec::new();
    for log in logs {
        for e in &log.spray_events {
            let (lo, hi) = log.geometry.nozzle_span(e.nozzle_id);
            let cross = 0.5 * (lo + hi);
            let (a, b) = e.along_interval(log.speed_mps);
            let (x0, y0) = origin.project(a, cross);
            let (x1, y1) = origin.project(b, cross);
            features.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[x0, y0], [x1, y1]],
                },
                "properties": {
                    "strip": log.strip_index,
                    "treatment": log.treatment.as_str(),
                    "nozzle": e.nozzle_id,
                    "duration_ms": e.duration_ms,
                    "volume_l": e.volume_l,
                },
            }));
        }
    }
    Ok(json!({
        "type": "FeatureCollection",
        "features": features,
    }))
}
