//! Synthetic weed fields and the replicated strip-trial layout.
//!
//! Strips sit side by side across the paddock, each `rows_per_strip` rows
//! wide and `length_m` long, with treatments alternating. Weeds are points
//! drawn from either a homogeneous Poisson process or a Thomas cluster
//! process, one independent RNG substream per strip.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeciesClass {
    Nutgrass,
    Grass,
    Broadleaf,
}

impl SpeciesClass {
    pub const ALL: [SpeciesClass; 3] = [Self::Nutgrass, Self::Grass, Self::Broadleaf];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Nutgrass => "nutgrass",
            Self::Grass => "grass",
            Self::Broadleaf => "broadleaf",
        }
    }
}

impl fmt::Display for SpeciesClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeciesClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nutgrass" => Ok(Self::Nutgrass),
            "grass" => Ok(Self::Grass),
            "broadleaf" => Ok(Self::Broadleaf),
            other => Err(format!("unknown species class `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Blanket,
    Spot,
}

impl Treatment {
    pub fn other(self) -> Self {
        match self {
            Self::Blanket => Self::Spot,
            Self::Spot => Self::Blanket,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Blanket => "blanket",
            Self::Spot => "spot",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Treatment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blanket" => Ok(Self::Blanket),
            "spot" => Ok(Self::Spot),
            other => Err(format!("unknown treatment `{other}` (expected blanket or spot)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeedInstance {
    pub id: u64,
    pub species: SpeciesClass,
    pub along_m: f64,
    pub cross_m: f64,
    pub detectability: f64,
}

/// One treatment strip. `cross_offset_m` is the cross-track coordinate of the
/// strip's first row edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub index: usize,
    pub treatment: Treatment,
    pub rows_per_strip: usize,
    pub row_width_m: f64,
    pub length_m: f64,
    pub cross_offset_m: f64,
    pub area_ha: f64,
}

impl Strip {
    pub fn width_m(&self) -> f64 {
        self.rows_per_strip as f64 * self.row_width_m
    }

    pub fn area_m2(&self) -> f64 {
        self.width_m() * self.length_m
    }

    pub fn row_centre(&self, row: usize) -> f64 {
        self.cross_offset_m + (row as f64 + 0.5) * self.row_width_m
    }

    pub fn contains(&self, along: f64, cross: f64) -> bool {
        along >= 0.0
            && along <= self.length_m
            && cross >= self.cross_offset_m
            && cross < self.cross_offset_m + self.width_m()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLayout {
    pub strips: Vec<Strip>,
    pub total_area_ha: f64,
}

pub fn layout_trial(
    n_strips: usize,
    rows_per_strip: usize,
    row_width_m: f64,
    strip_length_m: f64,
    first_treatment: Treatment,
) -> Result<TrialLayout> {
    if n_strips < 2 {
        return Err(Error::Domain(format!(
            "a trial needs at least 2 strips, got {n_strips}"
        )));
    }
    if rows_per_strip == 0 || !(row_width_m > 0.0) || !(strip_length_m > 0.0) {
        return Err(Error::Domain(
            "rows per strip, row width and strip length must be positive".into(),
        ));
    }
    let width = rows_per_strip as f64 * row_width_m;
    let area_ha = width * strip_length_m / 10_000.0;
    let mut treatment = first_treatment;
    let strips: Vec<Strip> = (0..n_strips)
        .map(|index| {
            let strip = Strip {
                index,
                treatment,
                rows_per_strip,
                row_width_m,
                length_m: strip_length_m,
                cross_offset_m: index as f64 * width,
                area_ha,
            };
            treatment = treatment.other();
            strip
        })
        .collect();
    let total_area_ha = strips.iter().map(|s| s.area_ha).sum();
    Ok(TrialLayout {
        strips,
        total_area_ha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum Clustering {
    /// Homogeneous Poisson process with `intensity` weeds per m².
    UniformPoisson { intensity: f64 },
    /// Parents at `parent_rate` per m², each with Poisson(`mean_offspring`)
    /// weeds displaced by an isotropic Gaussian of s.d. `cluster_radius` m.
    ThomasCluster {
        parent_rate: f64,
        cluster_radius: f64,
        mean_offspring: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub seed: u64,
    pub clustering: Clustering,
    /// Relative weights of the species classes; need not sum to one.
    pub species_mix: Vec<(SpeciesClass, f64)>,
    /// Detectability is drawn uniformly from this closed range.
    pub detectability: (f64, f64),
}

impl FieldSpec {
    pub fn uniform(seed: u64, intensity: f64) -> Self {
        Self {
            seed,
            clustering: Clustering::UniformPoisson { intensity },
            species_mix: vec![(SpeciesClass::Nutgrass, 1.0)],
            detectability: (1.0, 1.0),
        }
    }

    /// Expected weeds per m².
    pub fn target_density(&self) -> f64 {
        match self.clustering {
            Clustering::UniformPoisson { intensity } => intensity,
            Clustering::ThomasCluster {
                parent_rate,
                mean_offspring,
                ..
            } => parent_rate * mean_offspring,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.clustering {
            Clustering::UniformPoisson { intensity } => {
                if !(intensity >= 0.0) || !intensity.is_finite() {
                    return Err(Error::Domain(format!(
                        "weed intensity must be >= 0, got {intensity}"
                    )));
                }
            }
            Clustering::ThomasCluster {
                parent_rate,
                cluster_radius,
                mean_offspring,
            } => {
                if !(parent_rate > 0.0 && cluster_radius > 0.0 && mean_offspring > 0.0) {
                    return Err(Error::Domain(
                        "Thomas cluster parameters must all be > 0".into(),
                    ));
                }
            }
        }
        if self.species_mix.is_empty()
            || self.species_mix.iter().any(|(_, w)| !(*w >= 0.0))
            || self.species_mix.iter().all(|(_, w)| *w == 0.0)
        {
            return Err(Error::Domain(
                "species mix needs at least one positive weight".into(),
            ));
        }
        let (lo, hi) = self.detectability;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Domain(format!(
                "detectability range must satisfy 0 < min <= max <= 1, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Poisson intensity (weeds/m²) at which an image of `image_area_m2` holds at
/// least one weed with probability `fraction`.
pub fn intensity_for_image_fraction(fraction: f64, image_area_m2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Domain(format!(
            "image density must be in [0, 1), got {fraction}"
        )));
    }
    if !(image_area_m2 > 0.0) {
        return Err(Error::Domain("image area must be > 0".into()));
    }
    Ok(-(1.0 - fraction).ln() / image_area_m2)
}

fn poisson_count(rng: &mut SimRng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // rand_distr returns the count as f64
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn pick_species(rng: &mut SimRng, mix: &[(SpeciesClass, f64)]) -> SpeciesClass {
    if mix.len() == 1 {
        return mix[0].0;
    }
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(class, w) in mix {
        if u < w {
            return class;
        }
        u -= w;
    }
    mix[mix.len() - 1].0
}

fn draw_detectability(rng: &mut SimRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn strip_points(spec: &FieldSpec, strip: &Strip) -> Vec<(f64, f64)> {
    let mut rng = substream(spec.seed, Purpose::Field, strip.index as u64);
    let (x0, w, len) = (strip.cross_offset_m, strip.width_m(), strip.length_m);
    match spec.clustering {
        Clustering::UniformPoisson { intensity } => {
            let n = poisson_count(&mut rng, intensity * strip.area_m2());
            (0..n)
                .map(|_| (rng.random::<f64>() * len, x0 + rng.random::<f64>() * w))
                .collect()
        }
        Clustering::ThomasCluster {
            parent_rate,
            cluster_radius,
            mean_offspring,
        } => {
            // Parents outside the strip still seed offspring inside it.
            let margin = 4.0 * cluster_radius;
            let ext_len = len + 2.0 * margin;
            let ext_w = w + 2.0 * margin;
            let parents = poisson_count(&mut rng, parent_rate * ext_len * ext_w);
            let offset = Normal::new(0.0, cluster_radius).expect("radius validated > 0");
            let mut points = Vec::new();
            for _ in 0..parents {
                let pa = -margin + rng.random::<f64>() * ext_len;
                let pc = x0 - margin + rng.random::<f64>() * ext_w;
                let children = poisson_count(&mut rng, mean_offspring);
                for _ in 0..children {
                    let a = pa + offset.sample(&mut rng);
                    let c = pc + offset.sample(&mut rng);
                    if strip.contains(a, c) {
                        points.push((a, c));
                    }
                }
            }
            points
        }
    }
}

/// Generates every strip's weeds, sorted along-track within each strip, with
/// ids assigned sequentially in strip order.
pub fn generate_field(spec: &FieldSpec, layout: &TrialLayout) -> Result<Vec<WeedInstance>> {
    spec.validate()?;
    if layout.strips.is_empty() || layout.strips.iter().any(|s| !(s.area_ha > 0.0)) {
        return Err(Error::Domain("trial layout has zero area".into()));
    }
    let per_strip: Vec<Vec<(SpeciesClass, f64, f64, f64)>> = layout
        .strips
        .par_iter()
        .map(|strip| {
            let mut points = strip_points(spec, strip);
            points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            // attributes come from a second pass over the same stream family
            let mut attr_rng = substream(spec.seed, Purpose::Field, (1 << 40) | strip.index as u64);
            points
                .into_iter()
                .map(|(a, c)| {
                    let species = pick_species(&mut attr_rng, &spec.species_mix);
                    let det = draw_detectability(&mut attr_rng, spec.detectability);
                    (species, a, c, det)
                })
                .collect()
        })
        .collect();

    let mut id = 0u64;
    let mut weeds = Vec::new();
    for strip in per_strip {
        for (species, along_m, cross_m, detectability) in strip {
            weeds.push(WeedInstance {
                id,
                species,
                along_m,
                cross_m,
                detectability,
            });
            id += 1;
        }
    }
    Ok(weeds)
}

/// Weeds lying inside `strip`.
pub fn weeds_in_strip<'a>(
    weeds: &'a [WeedInstance],
    strip: &'a Strip,
) -> impl Iterator<Item = &'a WeedInstance> + 'a {
    weeds.iter().filter(move |w| strip.contains(w.along_m, w.cross_m))
}
