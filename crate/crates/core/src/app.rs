//! Orchestration behind the `spotsim` subcommands.
//!
//! Everything is computed first and all files are written at the end, in a
//! fixed order, so identical inputs give byte-identical outputs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{summarize_trial, Knockdown, TreatmentStats};
use crate::config::{RunConfig, TrialSpec};
use crate::controller::{coverage_hits, simulate_trial, Coverage, PassLog};
use crate::error::{Error, Result};
use crate::fieldgen::{generate_field, Treatment, TrialLayout, WeedInstance};
use crate::io::emit_spray_map;
use crate::io::{
    pair_treatments, read_runoff_manifest, read_runoff_summary, read_treatments, write_detections,
    write_field, write_spray_events, write_treatments, TreatmentRecord,
};
use crate::reference;
use crate::report::{ModelledRunoff, Provenance, ReportBundle, StripRow};
use crate::waterq::{simulate_runoff, RunoffPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub spec: TrialSpec,
    pub weeds: Vec<WeedInstance>,
    pub logs: Vec<PassLog>,
    pub coverage: Vec<Coverage>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: RunConfig,
    pub config_sha256: String,
    pub layout: TrialLayout,
    pub trials: Vec<TrialRun>,
}

impl Simulation {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_sha256: Some(self.config_sha256.clone()),
            seed: Some(self.config.seed),
            ..Provenance::new()
        }
    }
}

/// Files produced by a command, in the order they were written.
pub type Outputs = Vec<PathBuf>;

/// Loads a config file and simulates every trial it describes.
pub fn simulate_path(config_path: &Path, seed: Option<u64>) -> Result<Simulation> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    simulate_str(&text, seed)
}

pub fn simulate_str(config_text: &str, seed: Option<u64>) -> Result<Simulation> {
    let config = RunConfig::from_toml_str(config_text, seed)?;
    let config_sha256 = crate::report::sha256_hex(config_text.as_bytes());
    let layout = config.layout()?;
    let trials = simulate(&config, &layout)?;
    Ok(Simulation {
        config,
        config_sha256,
        layout,
        trials,
    })
}

pub fn simulate(config: &RunConfig, layout: &TrialLayout) -> Result<Vec<TrialRun>> {
    config
        .trials
        .par_iter()
        .map(|spec| {
            let weeds = generate_field(&spec.field, layout)?;
            let logs = simulate_trial(&weeds, &layout.strips, &config.pass, spec.seed)?;
            let coverage = logs.iter().map(|l| coverage_hits(&weeds, l)).collect();
            Ok(TrialRun {
                spec: spec.clone(),
                weeds,
                logs,
                coverage,
            })
        })
        .collect()
}

/// Per-trial, per-treatment totals over strips: knockdown counts from the
/// coverage check, usage as total volume over total area.
pub fn treatment_records(trials: &[TrialRun]) -> Vec<TreatmentRecord> {
    let mut out = Vec::new();
    for t in trials {
        for treatment in [Treatment::Blanket, Treatment::Spot] {
            let strips: Vec<usize> = (0..t.logs.len()).filter(|&i| t.logs[i].treatment == treatment).collect();
            if strips.is_empty() {
                continue;
            }
            let (mut area, mut volume, mut sprayed, mut missed, mut images, mut with_det) = (0.0, 0.0, 0, 0, 0, 0);
            for &i in &strips {
                let log = &t.logs[i];
                area += log.area_ha;
                volume += log.total_volume_l();
                sprayed += t.coverage[i].sprayed.len() as u64;
                missed += t.coverage[i].missed.len() as u64;
                images += log.images_total;
                with_det += log.images_with_detection;
            }
            out.push(TreatmentRecord {
                trial_id: t.spec.id.clone(),
                treatment,
                stats: TreatmentStats {
                    knockdown: (sprayed + missed > 0).then_some(Knockdown::Counts { sprayed, missed }),
                    usage_l_per_ha: volume / area,
                    images_total: Some(images),
                    images_with_detection: Some(with_det),
                    area_ha: Some(area),
                },
            });
        }
    }
    out
}

fn strip_rows(trials: &[TrialRun]) -> Result<Vec<StripRow>> {
    let mut rows = Vec::new();
    for t in trials {
        for (log, cov) in t.logs.iter().zip(&t.coverage) {
            let weeds = cov.sprayed.len() + cov.missed.len();
            rows.push(StripRow {
                trial_id: t.spec.id.clone(),
                strip: log.strip_index,
                treatment: log.treatment,
                area_ha: log.area_ha,
                weeds,
                weeds_sprayed: cov.sprayed.len(),
                weeds_missed: cov.missed.len(),
                hit_rate: cov.hit_rate().ok(),
                usage_l_per_ha: log.usage_l_per_ha()?,
                images_total: log.images_total,
                images_with_detection: log.images_with_detection,
                weed_density: log.weed_density().unwrap_or(0.0),
                spray_events: log.spray_events.len(),
                sprayed_distance_fraction: log.sprayed_distance_fraction(),
            });
        }
    }
    Ok(rows)
}

/// Applied active ingredient scales with the spray volume, so the spot
/// strip receives `blanket_applied × spot usage / blanket usage`.
fn modelled_runoff(config: &RunConfig, records: &[TreatmentRecord]) -> Result<Vec<ModelledRunoff>> {
    let Some(m) = &config.runoff_model else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (id, spot, blanket) in pair_treatments("simulation", records)? {
        let blanket_usage = blanket.usage_l_per_ha;
        let spot_applied = m.blanket_applied_g_ha * spot.usage_l_per_ha / blanket_usage;
        let b = simulate_runoff(&m.ingredient, Treatment::Blanket, m.blanket_applied_g_ha, m.runoff_fraction, m.runoff_volume_l_ha)?;
        let s = simulate_runoff(&m.ingredient, Treatment::Spot, spot_applied, m.runoff_fraction, m.runoff_volume_l_ha)?;
        let pair = RunoffPair::from_events(id, &b, &s)?;
        out.push(ModelledRunoff {
            usage_reduction: 1.0 - spot.usage_l_per_ha / blanket_usage,
            concentration_reduction: pair.concentration_reduction()?,
            load_reduction: pair.load_reduction()?,
            pair,
        });
    }
    Ok(out)
}

pub fn simulation_report(sim: &Simulation, paper_compare: bool) -> Result<ReportBundle> {
    let records = treatment_records(&sim.trials);
    let trials = pair_treatments("simulation", &records)?
        .into_iter()
        .map(|(id, s, b)| summarize_trial(id, s, b))
        .collect::<Result<Vec<_>>>()?;
    let mut bundle = ReportBundle::new(sim.provenance(), trials, Vec::new())?;
    bundle.strips = strip_rows(&sim.trials)?;
    bundle.runoff_model = modelled_runoff(&sim.config, &records)?;
    if paper_compare {
        bundle.compare_with_reference(Some(&sim.config));
    }
    Ok(bundle)
}

/// Output directory: `--out` wins over the config's `output_dir`.
pub fn output_dir(out: Option<&Path>, config: &RunConfig) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::config("output_dir", "set output_dir in the config or pass --out"))
}

/// Directory-safe form of a trial id.
fn dir_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes(v: &serde_json::Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Domain(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn spray_map_files(sim: &Simulation, out: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = Vec::new();
    for t in &sim.trials {
        let map = emit_spray_map(&t.logs, sim.config.geo.as_ref())?;
        files.push((out.join("trials").join(dir_name(&t.spec.id)).join("spray_map.geojson"), json_bytes(&map)?));
    }
    Ok(files)
}

fn report_files(bundle: &ReportBundle, out: &Path, format: Format) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut files = vec![(out.join("report.txt"), bundle.render_text().into_bytes())];
    match format {
        Format::Csv => {
            for (name, body) in bundle.to_csv_tables() {
                files.push((out.join(name), body.into_bytes()));
            }
        }
        Format::Json => files.push((out.join("report.json"), bundle.to_json()?.into_bytes())),
    }
    Ok(files)
}

fn commit(files: Vec<(PathBuf, Vec<u8>)>) -> Result<Outputs> {
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the field, per-strip logs, treatment totals, spray maps (when a
/// geo origin is configured) and the report.
pub fn write_simulation(sim: &Simulation, bundle: &ReportBundle, out: &Path, format: Format) -> Result<Outputs> {
    let mut files = Vec::new();
    for t in &sim.trials {
        let dir = out.join("trials").join(dir_name(&t.spec.id));
        files.push((dir.join("field.csv"), csv_bytes(|b| write_field(b, &t.weeds))?));
        for log in &t.logs {
            let strip = dir.join(format!("strip-{}-{}", log.strip_index, log.treatment.as_str()));
            files.push((strip.join("spray_events.csv"), csv_bytes(|b| write_spray_events(b, &log.spray_events))?));
            files.push((strip.join("detections.csv"), csv_bytes(|b| write_detections(b, &log.detections))?));
        }
    }
    files.push((out.join("treatments.csv"), csv_bytes(|b| write_treatments(b, &treatment_records(&sim.trials)))?));
    if sim.config.geo.is_some() {
        files.extend(spray_map_files(sim, out)?);
    }
    files.extend(report_files(bundle, out, format)?);
    commit(files)
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub paper_compare: bool,
}

pub fn run_simulation(opts: &SimulateOptions) -> Result<(ReportBundle, Outputs)> {
    let sim = simulate_path(&opts.config, opts.seed)?;
    let out = output_dir(opts.out.as_deref(), &sim.config)?;
    let bundle = simulation_report(&sim, opts.paper_compare)?;
    let files = write_simulation(&sim, &bundle, &out, opts.format)?;
    Ok((bundle, files))
}

/// Simulates the configured run and writes only its spray maps.
pub fn run_spray_map(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Outputs> {
    let sim = simulate_path(config, seed)?;
    if sim.config.geo.is_none() {
        return Err(Error::config("geo", "a spray map needs a [geo] origin (lat_deg, lon_deg)"));
    }
    let out = output_dir(out, &sim.config)?;
    commit(spray_map_files(&sim, &out)?)
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeInputs {
    pub treatments: Vec<PathBuf>,
    pub runoff: Vec<PathBuf>,
    pub runoff_manifests: Vec<PathBuf>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn analyze(inputs: &AnalyzeInputs, paper_compare: bool) -> Result<ReportBundle> {
    if inputs.treatments.is_empty() && inputs.runoff.is_empty() && inputs.runoff_manifests.is_empty() {
        return Err(Error::config(
            "inputs",
            "analyze needs at least one of --treatments, --runoff, --runoff-manifest",
        ));
    }
    let mut provenance = Provenance::new();
    let mut records = Vec::new();
    for path in &inputs.treatments {
        let bytes = read_bytes(path)?;
        let name = path.display().to_string();
        records.extend(read_treatments(&name, bytes.as_slice())?);
        provenance = provenance.with_input(name, &bytes);
    }
    let mut runoff = Vec::new();
    for path in &inputs.runoff {
        let bytes = read_bytes(path)?;
        let name = path.display().to_string();
        runoff.extend(read_runoff_summary(&name, bytes.as_slice())?);
        provenance = provenance.with_input(name, &bytes);
    }
    for path in &inputs.runoff_manifests {
        let bytes = read_bytes(path)?;
        runoff.extend(read_runoff_manifest(path)?);
        provenance = provenance.with_input(path.display().to_string(), &bytes);
    }
    bundle_from(provenance, &records, runoff, paper_compare)
}

fn bundle_from(
    provenance: Provenance,
    records: &[TreatmentRecord],
    runoff: Vec<RunoffPair>,
    paper_compare: bool,
) -> Result<ReportBundle> {
    let trials = if records.is_empty() {
        Vec::new()
    } else {
        pair_treatments("treatments", records)?
            .into_iter()
            .map(|(id, s, b)| summarize_trial(id, s, b))
            .collect::<Result<Vec<_>>>()?
    };
    let mut bundle = ReportBundle::new(provenance, trials, runoff)?;
    if paper_compare {
        bundle.compare_with_reference(None);
    }
    Ok(bundle)
}

/// `analyze --paper-compare` on the bundled published dataset.
pub fn paper_compare() -> Result<ReportBundle> {
    let provenance = Provenance::new()
        .with_input(format!("{} treatments", reference::LABEL), reference::TREATMENTS_CSV.as_bytes())
        .with_input(format!("{} runoff", reference::LABEL), reference::RUNOFF_CSV.as_bytes());
    let mut bundle = bundle_from(provenance, &reference::treatments()?, reference::runoff()?, true)?;
    bundle.notes.insert(
        0,
        format!("inputs are the {} bundled with this tool", reference::LABEL),
    );
    Ok(bundle)
}

pub fn write_report(bundle: &ReportBundle, out: &Path, format: Format) -> Result<Outputs> {
    commit(report_files(bundle, out, format)?)
}
