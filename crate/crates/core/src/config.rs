//! Run configuration.
//!
//! One TOML file fully determines a simulation run. Every section is
//! optional and falls back to the documented defaults, except the seed,
//! which must come from the file or the command line. Problems are reported
//! as [`Error::Config`] naming the offending key.
//!
//! ```toml
//! seed = 42
//!
//! [vehicle]
//! speed_kmh = 8.0
//!
//! [field]
//! process = "uniform_poisson"
//! image_fraction = 0.3
//!
//! [[trial]]
//! id = "sparse"
//! [trial.field]
//! image_fraction = 0.05
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{calibrated_flow_rate, LatencyProfile, PassConfig, SprayDuration, StageDelay};
use crate::detector::{DetectorProfile, ExposureDegradation};
use crate::error::{Error, Result};
use crate::fieldgen::{
    intensity_for_image_fraction, layout_trial, Clustering, FieldSpec, SpeciesClass, Treatment,
    TrialLayout,
};
use crate::geometry::{CameraConfig, RowLayout, Speed, TileGrid, TileSpan};
use crate::io::GeoOrigin;
use crate::rng::{derive_seed, Purpose};

pub const DEFAULT_SPEED_KMH: f64 = 8.0;
pub const DEFAULT_BLANKET_RATE_L_HA: f64 = 200.0;
pub const DEFAULT_INTENSITY_PER_M2: f64 = 0.1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    vehicle: RawVehicle,
    #[serde(default)]
    spray: RawSpray,
    #[serde(default)]
    camera: RawCamera,
    #[serde(default)]
    layout: RawLayout,
    #[serde(default)]
    field: RawField,
    #[serde(default, rename = "trial")]
    trials: Vec<RawTrial>,
    #[serde(default)]
    detector: RawDetector,
    #[serde(default)]
    latency: RawLatency,
    geo: Option<GeoOrigin>,
    runoff_model: Option<RunoffModel>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVehicle {
    speed_kmh: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpray {
    duration_ms: Option<f64>,
    scale_with_speed: Option<bool>,
    reference_speed_kmh: Option<f64>,
    flow_rate_lps: Option<f64>,
    blanket_rate_l_ha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    mount_height_m: Option<f64>,
    horizontal_fov_deg: Option<f64>,
    along_track_footprint_m: Option<f64>,
    frame_period_ms: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    strips: Option<usize>,
    rows_per_strip: Option<usize>,
    row_width_m: Option<f64>,
    strip_length_m: Option<f64>,
    first_treatment: Option<Treatment>,
    swath_width_m: Option<f64>,
    nozzle_of_tile: Option<Vec<usize>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    process: Option<String>,
    intensity_per_m2: Option<f64>,
    image_fraction: Option<f64>,
    parent_rate_per_m2: Option<f64>,
    cluster_radius_m: Option<f64>,
    mean_offspring: Option<f64>,
    species_mix: Option<BTreeMap<String, f64>>,
    detectability: Option<[f64; 2]>,
}

impl RawField {
    fn sets_process(&self) -> bool {
        self.process.is_some()
            || self.intensity_per_m2.is_some()
            || self.image_fraction.is_some()
            || self.parent_rate_per_m2.is_some()
            || self.cluster_radius_m.is_some()
            || self.mean_offspring.is_some()
    }

    /// Point-process keys are replaced as a group; the rest key by key.
    fn over(&self, base: &RawField) -> RawField {
        let process = if self.sets_process() { self } else { base };
        RawField {
            process: process.process.clone(),
            intensity_per_m2: process.intensity_per_m2,
            image_fraction: process.image_fraction,
            parent_rate_per_m2: process.parent_rate_per_m2,
            cluster_radius_m: process.cluster_radius_m,
            mean_offspring: process.mean_offspring,
            species_mix: self.species_mix.clone().or_else(|| base.species_mix.clone()),
            detectability: self.detectability.or(base.detectability),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrial {
    id: Option<String>,
    field: Option<RawField>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawRate {
    Single(f64),
    PerClass(BTreeMap<String, f64>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    tpr: Option<RawRate>,
    fpr: Option<f64>,
    targets: Option<Vec<String>>,
    exposure: Option<ExposureDegradation>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    mean_ms: f64,
    sd_ms: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatency {
    acquisition: Option<RawStage>,
    preprocessing: Option<RawStage>,
    inference: Option<RawStage>,
    solenoid: Option<RawStage>,
}

/// Proportional runoff surrogate: a fixed share of the applied active
/// ingredient leaves the field in a fixed volume of water.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunoffModel {
    pub ingredient: String,
    /// Active ingredient applied by the blanket treatment, g/ha.
    pub blanket_applied_g_ha: f64,
    pub runoff_fraction: f64,
    pub runoff_volume_l_ha: f64,
}

/// One simulated trial: its own field, laid out and sprayed identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSpec {
    pub id: String,
    pub seed: u64,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub rows: RowLayout,
    pub strips: usize,
    pub first_treatment: Treatment,
    pub pass: PassConfig,
    /// Target blanket rate the flow was calibrated to, if it was.
    pub blanket_rate_l_ha: Option<f64>,
    pub trials: Vec<TrialSpec>,
    pub geo: Option<GeoOrigin>,
    pub runoff_model: Option<RunoffModel>,
}

fn wrap(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        e @ Error::Config { .. } => e,
        other => Error::config(field, other.to_string()),
    }
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be > 0, got {v}")))
    }
}

fn class(field: &str, name: &str) -> Result<SpeciesClass> {
    name.parse().map_err(|e: String| Error::config(field, e))
}

impl RunConfig {
    pub fn from_path(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, seed_override)
    }

    pub fn from_toml_str(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into()),
            message: e.message().to_string(),
        })?;
        Self::from_raw(raw, seed_override)
    }

    fn from_raw(raw: RawConfig, seed_override: Option<u64>) -> Result<Self> {
        let seed = seed_override.or(raw.seed).ok_or_else(|| {
            Error::config("seed", "a seed is required (in the config or via --seed)")
        })?;

        let speed_kmh = raw.vehicle.speed_kmh.unwrap_or(DEFAULT_SPEED_KMH);
        let speed = Speed::from_kmh(speed_kmh).map_err(wrap("vehicle.speed_kmh"))?;

        let d = CameraConfig::default();
        let camera = CameraConfig {
            mount_height_m: raw.camera.mount_height_m.unwrap_or(d.mount_height_m),
            horizontal_fov_deg: raw.camera.horizontal_fov_deg.unwrap_or(d.horizontal_fov_deg),
            along_track_footprint_m: raw
                .camera
                .along_track_footprint_m
                .unwrap_or(d.along_track_footprint_m),
            frame_period_ms: raw.camera.frame_period_ms.unwrap_or(d.frame_period_ms),
        };
        camera.validate().map_err(wrap("camera"))?;

        let dl = RowLayout::default();
        let rows = RowLayout {
            row_width_m: raw.layout.row_width_m.unwrap_or(dl.row_width_m),
            rows_per_strip: raw.layout.rows_per_strip.unwrap_or(dl.rows_per_strip),
            strip_length_m: raw.layout.strip_length_m.unwrap_or(dl.strip_length_m),
        };
        rows.validate().map_err(wrap("layout"))?;
        let strips = raw.layout.strips.unwrap_or(4);
        let first_treatment = raw.layout.first_treatment.unwrap_or(Treatment::Blanket);
        let layout = layout_trial(
            strips,
            rows.rows_per_strip,
            rows.row_width_m,
            rows.strip_length_m,
            first_treatment,
        )
        .map_err(wrap("layout.strips"))?;

        let swath = match raw.layout.swath_width_m {
            Some(w) => positive("layout.swath_width_m", w)?,
            None => camera.fov_width().map_err(wrap("camera"))?.min(rows.row_width_m),
        };
        let mut grid = TileGrid::split(swath).map_err(wrap("layout.swath_width_m"))?;
        if let Some(map) = raw.layout.nozzle_of_tile {
            let tiles: Vec<TileSpan> = grid.tiles().to_vec();
            grid = TileGrid::new(tiles, map).map_err(wrap("layout.nozzle_of_tile"))?;
        }

        let detector = detector_profile(&raw.detector)?;
        let latency = latency_profile(&raw.latency)?;

        let spray_duration = {
            let ms = positive("spray.duration_ms", raw.spray.duration_ms.unwrap_or(450.0))?;
            if raw.spray.scale_with_speed.unwrap_or(true) {
                SprayDuration::SpeedScaled {
                    reference_ms: ms,
                    reference_speed_kmh: positive(
                        "spray.reference_speed_kmh",
                        raw.spray.reference_speed_kmh.unwrap_or(DEFAULT_SPEED_KMH),
                    )?,
                }
            } else {
                if raw.spray.reference_speed_kmh.is_some() {
                    return Err(Error::config(
                        "spray.reference_speed_kmh",
                        "only used when scale_with_speed = true",
                    ));
                }
                SprayDuration::Fixed { ms }
            }
        };
        spray_duration.resolve(speed).map_err(wrap("spray.duration_ms"))?;

        let (flow_rate_lps, blanket_rate_l_ha) = match (raw.spray.flow_rate_lps, raw.spray.blanket_rate_l_ha) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "spray.flow_rate_lps",
                    "give either flow_rate_lps or blanket_rate_l_ha, not both",
                ))
            }
            (Some(q), None) => (positive("spray.flow_rate_lps", q)?, None),
            (None, rate) => {
                let rate = positive("spray.blanket_rate_l_ha", rate.unwrap_or(DEFAULT_BLANKET_RATE_L_HA))?;
                let q = calibrated_flow_rate(rate, grid.tile_width(), speed)
                    .map_err(wrap("spray.blanket_rate_l_ha"))?;
                (q, Some(rate))
            }
        };

        let pass = PassConfig {
            camera,
            grid,
            detector,
            latency,
            speed,
            spray_duration,
            flow_rate_lps,
        };
        pass.validate().map_err(wrap("layout"))?;
        let check_fits = crate::controller::PassGeometry::new(&layout.strips[0], &pass.grid);
        check_fits.map_err(wrap("layout.swath_width_m"))?;

        let image_area = pass.grid.total_width() * camera.along_track_footprint_m;
        let trials = if raw.trials.is_empty() {
            vec![TrialSpec {
                id: "1".into(),
                seed,
                field: field_spec("field", &raw.field, seed, image_area)?,
            }]
        } else {
            let mut out: Vec<TrialSpec> = Vec::new();
            for (i, t) in raw.trials.iter().enumerate() {
                let id = t.id.clone().unwrap_or_else(|| (i + 1).to_string());
                if out.iter().any(|o| o.id == id) {
                    return Err(Error::config(format!("trial[{i}].id"), format!("duplicate trial id `{id}`")));
                }
                let merged = t.field.as_ref().map_or_else(|| raw.field.clone(), |f| f.over(&raw.field));
                let trial_seed = derive_seed(seed, Purpose::Trial, i as u64);
                let field = field_spec(&format!("trial[{i}].field"), &merged, trial_seed, image_area)?;
                out.push(TrialSpec {
                    id,
                    seed: trial_seed,
                    field,
                });
            }
            out
        };

        if let Some(g) = &raw.geo {
            g.validate()?;
        }
        if let Some(m) = &raw.runoff_model {
            crate::waterq::simulate_runoff(
                &m.ingredient,
                Treatment::Blanket,
                m.blanket_applied_g_ha,
                m.runoff_fraction,
                m.runoff_volume_l_ha,
            )
            .map_err(wrap("runoff_model"))?;
        }

        Ok(Self {
            seed,
            output_dir: raw.output_dir,
            rows,
            strips,
            first_treatment,
            pass,
            blanket_rate_l_ha,
            trials,
            geo: raw.geo,
            runoff_model: raw.runoff_model,
        })
    }

    pub fn layout(&self) -> Result<TrialLayout> {
        layout_trial(
            self.strips,
            self.rows.rows_per_strip,
            self.rows.row_width_m,
            self.rows.strip_length_m,
            self.first_treatment,
        )
    }
}

fn field_spec(section: &str, raw: &RawField, seed: u64, image_area_m2: f64) -> Result<FieldSpec> {
    let key = |k: &str| format!("{section}.{k}");
    let process = raw.process.as_deref().unwrap_or("uniform_poisson");
    let clustering = match process {
        "uniform_poisson" => {
            for (name, v) in [
                ("parent_rate_per_m2", raw.parent_rate_per_m2),
                ("cluster_radius_m", raw.cluster_radius_m),
                ("mean_offspring", raw.mean_offspring),
            ] {
                if v.is_some() {
                    return Err(Error::config(key(name), "only used by thomas_cluster"));
                }
            }
            let intensity = match (raw.intensity_per_m2, raw.image_fraction) {
                (Some(_), Some(_)) => {
                    return Err(Error::config(
                        key("image_fraction"),
                        "give either intensity_per_m2 or image_fraction, not both",
                    ))
                }
                (Some(x), None) => x,
                (None, Some(f)) => intensity_for_image_fraction(f, image_area_m2)
                    .map_err(wrap(&key("image_fraction")))?,
                (None, None) => DEFAULT_INTENSITY_PER_M2,
            };
            if !(intensity >= 0.0 && intensity.is_finite()) {
                return Err(Error::config(key("intensity_per_m2"), format!("must be >= 0, got {intensity}")));
            }
            Clustering::UniformPoisson { intensity }
        }
        "thomas_cluster" => {
            for (name, v) in [("intensity_per_m2", raw.intensity_per_m2), ("image_fraction", raw.image_fraction)] {
                if v.is_some() {
                    return Err(Error::config(key(name), "only used by uniform_poisson"));
                }
            }
            let need = |name: &str, v: Option<f64>| {
                v.ok_or_else(|| Error::config(key(name), "required for thomas_cluster"))
                    .and_then(|x| positive(&key(name), x))
            };
            Clustering::ThomasCluster {
                parent_rate: need("parent_rate_per_m2", raw.parent_rate_per_m2)?,
                cluster_radius: need("cluster_radius_m", raw.cluster_radius_m)?,
                mean_offspring: need("mean_offspring", raw.mean_offspring)?,
            }
        }
        other => {
            return Err(Error::config(
                key("process"),
                format!("unknown process `{other}` (uniform_poisson or thomas_cluster)"),
            ))
        }
    };
    let species_mix = match &raw.species_mix {
        None => SpeciesClass::ALL.iter().map(|&c| (c, 1.0)).collect(),
        Some(m) => m
            .iter()
            .map(|(k, &w)| Ok((class(&key("species_mix"), k)?, w)))
            .collect::<Result<Vec<_>>>()?,
    };
    let [lo, hi] = raw.detectability.unwrap_or([1.0, 1.0]);
    let spec = FieldSpec {
        seed,
        clustering,
        species_mix,
        detectability: (lo, hi),
    };
    spec.validate().map_err(wrap(section))?;
    Ok(spec)
}

fn detector_profile(raw: &RawDetector) -> Result<DetectorProfile> {
    let d = DetectorProfile::default();
    let mut tpr = d.true_positive_rate;
    match &raw.tpr {
        None => {}
        Some(RawRate::Single(x)) => tpr = [*x; SpeciesClass::COUNT],
        Some(RawRate::PerClass(map)) => {
            let mut seen = [false; SpeciesClass::COUNT];
            for (k, &v) in map {
                let c = class("detector.tpr", k)?;
                tpr[c.index()] = v;
                seen[c.index()] = true;
            }
            if let Some(c) = SpeciesClass::ALL.iter().find(|c| !seen[c.index()]) {
                return Err(Error::config("detector.tpr", format!("missing rate for {c}")));
            }
        }
    }
    let mut profile = DetectorProfile {
        true_positive_rate: tpr,
        false_positive_rate: raw.fpr.unwrap_or(d.false_positive_rate),
        exposure: raw.exposure.unwrap_or_default(),
        targets: d.targets,
    };
    if let Some(names) = &raw.targets {
        let classes = names
            .iter()
            .map(|n| class("detector.targets", n))
            .collect::<Result<Vec<_>>>()?;
        profile = profile.with_targets(&classes);
    }
    profile.validate().map_err(wrap("detector"))?;
    Ok(profile)
}

fn latency_profile(raw: &RawLatency) -> Result<LatencyProfile> {
    let d = LatencyProfile::default();
    let stage = |r: Option<RawStage>, default: StageDelay| {
        r.map_or(default, |s| StageDelay::new(s.mean_ms, s.sd_ms))
    };
    let profile = LatencyProfile {
        acquisition: stage(raw.acquisition, d.acquisition),
        preprocessing: stage(raw.preprocessing, d.preprocessing),
        inference: stage(raw.inference, d.inference),
        solenoid: stage(raw.solenoid, d.solenoid),
    };
    profile.validate().map_err(wrap("latency"))?;
    Ok(profile)
}
