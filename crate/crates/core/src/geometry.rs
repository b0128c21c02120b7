//! Vehicle kinematics, camera footprint and tile-to-nozzle ground mapping.
//!
//! The ground is a flat plane and the camera looks straight down. Along-track
//! coordinates grow in the direction of travel; cross-track coordinates are
//! measured across the rows. Everything internal is SI (metres, seconds);
//! km/h and milliseconds are accepted only at the edges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KMH_TO_MPS: f64 = 1000.0 / 3600.0;

/// Ground speed, stored in metres per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Speed(f64);

impl Speed {
    pub fn from_kmh(kmh: f64) -> Result<Self> {
        if !kmh.is_finite() || kmh < 0.0 {
            return Err(Error::Domain(format!("speed must be >= 0 km/h, got {kmh}")));
        }
        Ok(Self(kmh * KMH_TO_MPS))
    }

    pub fn from_mps(mps: f64) -> Result<Self> {
        if !mps.is_finite() || mps < 0.0 {
            return Err(Error::Domain(format!("speed must be >= 0 m/s, got {mps}")));
        }
        Ok(Self(mps))
    }

    pub fn mps(self) -> f64 {
        self.0
    }

    pub fn kmh(self) -> f64 {
        self.0 / KMH_TO_MPS
    }
}

/// Horizontal ground width seen by a nadir camera at `height_m` with a full
/// horizontal field-of-view angle of `angle_deg`.
pub fn fov_width(height_m: f64, angle_deg: f64) -> Result<f64> {
    if !(height_m > 0.0) || !height_m.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "mount height must be > 0, got {height_m}"
        )));
    }
    if !(0.0..180.0).contains(&angle_deg) {
        return Err(Error::InvalidGeometry(format!(
            "field-of-view angle must be in [0, 180) degrees, got {angle_deg}"
        )));
    }
    Ok(2.0 * height_m * (angle_deg.to_radians() / 2.0).tan())
}

/// Distance travelled (mm) at `speed` during `interval_ms`.
pub fn displacement_during(speed: Speed, interval_ms: f64) -> Result<f64> {
    if !(interval_ms >= 0.0) {
        return Err(Error::Domain(format!(
            "interval must be >= 0 ms, got {interval_ms}"
        )));
    }
    // m/s * ms = mm
    Ok(speed.mps() * interval_ms)
}

/// Along-track length (m) sprayed by a nozzle held open for `duration_s`.
pub fn spray_section_length(speed: Speed, duration_s: f64) -> Result<f64> {
    if !(duration_s >= 0.0) {
        return Err(Error::Domain(format!(
            "duration must be >= 0 s, got {duration_s}"
        )));
    }
    Ok(speed.mps() * duration_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub mount_height_m: f64,
    pub horizontal_fov_deg: f64,
    /// Along-track ground extent of one frame. Not derivable from the lens
    /// angle alone, so it is configured directly.
    pub along_track_footprint_m: f64,
    pub frame_period_ms: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            mount_height_m: 1.0,
            horizontal_fov_deg: 77.32,
            along_track_footprint_m: 0.8,
            frame_period_ms: 21.9,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mount_height_m > 0.0) {
            return Err(Error::InvalidGeometry("camera mount height must be > 0".into()));
        }
        if !(self.horizontal_fov_deg > 0.0 && self.horizontal_fov_deg < 180.0) {
            return Err(Error::InvalidGeometry(
                "camera field-of-view angle must be in (0, 180) degrees".into(),
            ));
        }
        if !(self.along_track_footprint_m > 0.0) {
            return Err(Error::InvalidGeometry(
                "along-track footprint must be > 0".into(),
            ));
        }
        if !(self.frame_period_ms > 0.0) {
            return Err(Error::InvalidGeometry("frame period must be > 0".into()));
        }
        Ok(())
    }

    pub fn fov_width(&self) -> Result<f64> {
        fov_width(self.mount_height_m, self.horizontal_fov_deg)
    }
}

/// Cross-track interval in camera-relative coordinates (0 = camera centre line).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSpan {
    pub cross_min: f64,
    pub cross_max: f64,
}

impl TileSpan {
    pub fn width(&self) -> f64 {
        self.cross_max - self.cross_min
    }
}

/// The two central inference tiles of a frame and the nozzle each one drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    tiles: Vec<TileSpan>,
    nozzle_of_tile: Vec<usize>,
}

impl TileGrid {
    pub const TILES_PER_CAMERA: usize = 2;

    /// Splits a swath centred under the camera into two equal tiles, tile `i`
    /// driving nozzle `i`.
    pub fn split(swath_width_m: f64) -> Result<Self> {
        if !(swath_width_m > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "swath width must be > 0, got {swath_width_m}"
            )));
        }
        let half = swath_width_m / 2.0;
        Self::new(
            vec![
                TileSpan { cross_min: -half, cross_max: 0.0 },
                TileSpan { cross_min: 0.0, cross_max: half },
            ],
            vec![0, 1],
        )
    }

    pub fn new(tiles: Vec<TileSpan>, nozzle_of_tile: Vec<usize>) -> Result<Self> {
        if tiles.len() != Self::TILES_PER_CAMERA {
            return Err(Error::InvalidGeometry(format!(
                "expected {} inference tiles, got {}",
                Self::TILES_PER_CAMERA,
                tiles.len()
            )));
        }
        if nozzle_of_tile.len() != tiles.len() {
            return Err(Error::ConfigMismatch(format!(
                "{} tiles but {} nozzle assignments",
                tiles.len(),
                nozzle_of_tile.len()
            )));
        }
        let mut seen = vec![false; tiles.len()];
        for &n in &nozzle_of_tile {
            if n >= tiles.len() || seen[n] {
                return Err(Error::ConfigMismatch(
                    "tile-to-nozzle mapping must be a bijection".into(),
                ));
            }
            seen[n] = true;
        }
        let width = tiles[0].width();
        if !(width > 0.0) {
            return Err(Error::InvalidGeometry("tile width must be > 0".into()));
        }
        for pair in tiles.windows(2) {
            if pair[0].cross_max != pair[1].cross_min {
                return Err(Error::InvalidGeometry(
                    "tiles must be contiguous and ordered".into(),
                ));
            }
        }
        if tiles.iter().any(|t| (t.width() - width).abs() > 1e-12 * width.max(1.0)) {
            return Err(Error::InvalidGeometry("tiles must have equal width".into()));
        }
        Ok(Self {
            tiles,
            nozzle_of_tile,
        })
    }

    pub fn tiles(&self) -> &[TileSpan] {
        &self.tiles
    }

    pub fn nozzle_of_tile(&self, tile: usize) -> usize {
        self.nozzle_of_tile[tile]
    }

    pub fn tile_width(&self) -> f64 {
        self.tiles[0].width()
    }

    pub fn total_width(&self) -> f64 {
        self.tiles[self.tiles.len() - 1].cross_max - self.tiles[0].cross_min
    }

    /// Tile containing a camera-relative cross-track offset. Intervals are
    /// half-open except the last, which also owns its outer edge.
    pub fn tile_of(&self, cross_offset: f64) -> Option<usize> {
        let last = self.tiles.len() - 1;
        self.tiles.iter().enumerate().find_map(|(i, t)| {
            let inside = cross_offset >= t.cross_min
                && (cross_offset < t.cross_max || (i == last && cross_offset == t.cross_max));
            inside.then_some(i)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowLayout {
    pub row_width_m: f64,
    pub rows_per_strip: usize,
    pub strip_length_m: f64,
}

impl Default for RowLayout {
    fn default() -> Self {
        Self {
            row_width_m: 1.6,
            rows_per_strip: 13,
            strip_length_m: 601.0,
        }
    }
}

impl RowLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.row_width_m > 0.0) || self.rows_per_strip == 0 || !(self.strip_length_m > 0.0) {
            return Err(Error::InvalidGeometry(
                "row width, rows per strip and strip length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Vehicle position along a pass. `along_track_position_m` is the position at
/// pass time zero; the vehicle then moves at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub along_track_position_m: f64,
    pub speed: Speed,
    pub row_index: usize,
}

impl VehicleState {
    pub fn position_at(&self, t_ms: f64) -> f64 {
        self.along_track_position_m + self.speed.mps() * t_ms / 1000.0
    }

    /// Pass time (ms) at which the camera centre reaches `position_m`.
    /// Undefined for a stationary vehicle.
    pub fn time_at(&self, position_m: f64) -> Option<f64> {
        (self.speed.mps() > 0.0)
            .then(|| (position_m - self.along_track_position_m) / self.speed.mps() * 1000.0)
    }

    pub fn advanced(&self, dt_ms: f64) -> Self {
        Self {
            along_track_position_m: self.position_at(dt_ms),
            ..*self
        }
    }
}

/// Axis-aligned ground rectangle. Cross-track bounds are camera-relative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundRect {
    pub along_min: f64,
    pub along_max: f64,
    pub cross_min: f64,
    pub cross_max: f64,
}

impl GroundRect {
    pub fn contains(&self, along: f64, cross: f64) -> bool {
        along >= self.along_min
            && along <= self.along_max
            && cross >= self.cross_min
            && cross <= self.cross_max
    }
}

/// Ground rectangle of each inference tile for the frame taken with the
/// vehicle in state `vehicle`, centred on the camera's ground point.
pub fn tile_ground_footprint(
    camera: &CameraConfig,
    grid: &TileGrid,
    vehicle: &VehicleState,
) -> Result<Vec<GroundRect>> {
    camera.validate()?;
    let fov = camera.fov_width()?;
    let left = grid.tiles()[0].cross_min;
    let right = grid.tiles()[grid.tiles().len() - 1].cross_max;
    // Small tolerance: a lens angle chosen to give exactly the tile width
    // lands a few ulps either side of it.
    let tol = 1e-9 * fov.max(1.0);
    if left < -fov / 2.0 - tol || right > fov / 2.0 + tol {
        return Err(Error::InvalidGeometry(format!(
            "tiles span [{left}, {right}] m but the field of view is only {fov} m wide"
        )));
    }
    let half = camera.along_track_footprint_m / 2.0;
    let centre = vehicle.along_track_position_m;
    Ok(grid
        .tiles()
        .iter()
        .map(|t| GroundRect {
            along_min: centre - half,
            along_max: centre + half,
            cross_min: t.cross_min,
            cross_max: t.cross_max,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn kmh(v: f64) -> Speed {
        Speed::from_kmh(v).unwrap()
    }

    #[test]
    fn fov_width_examples() {
        // Direct evaluation: 2 * 1.0 * tan(38.66 deg) = 1.600011
        assert_abs_diff_eq!(fov_width(1.0, 77.32).unwrap(), 1.600, epsilon = 5e-4);
        assert_eq!(fov_width(1.0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fov_width(2.0, 77.32).unwrap(), 3.200, epsilon = 1e-3);
        assert_abs_diff_eq!(
            fov_width(2.0, 77.32).unwrap(),
            2.0 * fov_width(1.0, 77.32).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn fov_width_rejects_bad_inputs() {
        assert!(matches!(fov_width(1.0, 180.0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(fov_width(0.0, 60.0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(fov_width(-1.0, 60.0), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn displacement_examples() {
        assert_abs_diff_eq!(displacement_during(kmh(8.0), 58.16).unwrap(), 129.2, epsilon = 0.05);
        assert_eq!(displacement_during(kmh(0.0), 58.16).unwrap(), 0.0);
        assert_abs_diff_eq!(displacement_during(kmh(4.0), 58.16).unwrap(), 64.6, epsilon = 0.05);
        assert!(Speed::from_kmh(-1.0).is_err());
        assert!(displacement_during(kmh(8.0), -1.0).is_err());
    }

    #[test]
    fn spray_section_examples() {
        assert_abs_diff_eq!(spray_section_length(kmh(8.0), 0.45).unwrap(), 1.0, epsilon = 1e-3);
        assert_eq!(spray_section_length(kmh(8.0), 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(spray_section_length(kmh(4.0), 0.45).unwrap(), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn footprint_splits_fov_symmetrically() {
        let camera = CameraConfig::default();
        let grid = TileGrid::split(1.6).unwrap();
        let vehicle = VehicleState {
            along_track_position_m: 0.0,
            speed: kmh(8.0),
            row_index: 0,
        };
        let rects = tile_ground_footprint(&camera, &grid, &vehicle).unwrap();
        assert_eq!(rects.len(), 2);
        assert_eq!((rects[0].cross_min, rects[0].cross_max), (-0.8, 0.0));
        assert_eq!((rects[1].cross_min, rects[1].cross_max), (0.0, 0.8));
        assert_eq!((rects[0].along_min, rects[0].along_max), (-0.4, 0.4));
    }

    #[test]
    fn footprint_advances_with_vehicle() {
        let camera = CameraConfig {
            frame_period_ms: 100.0,
            ..CameraConfig::default()
        };
        let grid = TileGrid::split(1.6).unwrap();
        let still = VehicleState {
            along_track_position_m: 3.0,
            speed: kmh(0.0),
            row_index: 0,
        };
        let a = tile_ground_footprint(&camera, &grid, &still).unwrap();
        let b = tile_ground_footprint(&camera, &grid, &still.advanced(100.0)).unwrap();
        assert_eq!(a, b);

        let moving = VehicleState { speed: kmh(8.0), ..still };
        let a = tile_ground_footprint(&camera, &grid, &moving).unwrap();
        let b = tile_ground_footprint(&camera, &grid, &moving.advanced(camera.frame_period_ms))
            .unwrap();
        assert_abs_diff_eq!(b[0].along_min - a[0].along_min, 0.2222, epsilon = 1e-4);
    }

    #[test]
    fn footprint_rejects_tiles_wider_than_fov() {
        let camera = CameraConfig::default();
        let grid = TileGrid::split(2.0).unwrap();
        let vehicle = VehicleState {
            along_track_position_m: 0.0,
            speed: kmh(8.0),
            row_index: 0,
        };
        assert!(matches!(
            tile_ground_footprint(&camera, &grid, &vehicle),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn tile_grid_validation() {
        let t = |a, b| TileSpan { cross_min: a, cross_max: b };
        assert!(TileGrid::new(vec![t(-0.8, 0.0)], vec![0]).is_err());
        assert!(TileGrid::new(vec![t(-0.8, 0.0), t(0.1, 0.9)], vec![0, 1]).is_err());
        assert!(TileGrid::new(vec![t(-0.8, 0.0), t(0.0, 0.5)], vec![0, 1]).is_err());
        assert!(matches!(
            TileGrid::new(vec![t(-0.8, 0.0), t(0.0, 0.8)], vec![0, 0]),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(matches!(
            TileGrid::new(vec![t(-0.8, 0.0), t(0.0, 0.8)], vec![0]),
            Err(Error::ConfigMismatch(_))
        ));
        let swapped = TileGrid::new(vec![t(-0.8, 0.0), t(0.0, 0.8)], vec![1, 0]).unwrap();
        assert_eq!(swapped.nozzle_of_tile(0), 1);
    }

    #[test]
    fn tile_of_assigns_edges_once() {
        let grid = TileGrid::split(1.6).unwrap();
        assert_eq!(grid.tile_of(-0.8), Some(0));
        assert_eq!(grid.tile_of(0.0), Some(1));
        assert_eq!(grid.tile_of(0.8), Some(1));
        assert_eq!(grid.tile_of(0.81), None);
        assert_eq!(grid.tile_of(-0.81), None);
    }

    proptest! {
        #[test]
        fn fov_width_strictly_increasing(h in 0.1f64..10.0, a in 1.0f64..170.0, dh in 0.01f64..1.0, da in 0.01f64..5.0) {
            let base = fov_width(h, a).unwrap();
            prop_assert!(fov_width(h + dh, a).unwrap() > base);
            if a + da < 180.0 {
                prop_assert!(fov_width(h, a + da).unwrap() > base);
            }
        }

        #[test]
        fn displacement_is_additive(v in 0.0f64..30.0, a in 0.0f64..1e4, b in 0.0f64..1e4) {
            let s = kmh(v);
            let whole = displacement_during(s, a + b).unwrap();
            let parts = displacement_during(s, a).unwrap() + displacement_during(s, b).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
        }

        #[test]
        fn tiles_partition_the_swath(w in 0.2f64..3.0, x in -5.0f64..5.0) {
            let camera = CameraConfig { horizontal_fov_deg: 170.0, ..CameraConfig::default() };
            let grid = TileGrid::split(w).unwrap();
            let v = VehicleState { along_track_position_m: x, speed: kmh(8.0), row_index: 0 };
            let r = tile_ground_footprint(&camera, &grid, &v).unwrap();
            prop_assert_eq!(r[0].cross_max, r[1].cross_min);
            prop_assert!((r[1].cross_max - r[0].cross_min - w).abs() < 1e-12);
            prop_assert!((r[0].cross_max - r[0].cross_min - (r[1].cross_max - r[1].cross_min)).abs() < 1e-12);
        }
    }
}
