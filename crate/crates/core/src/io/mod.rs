//! File formats: CSV for fields, pass logs, treatment statistics and runoff
//! data; TOML for runoff manifests; GeoJSON for spray maps.
//!
//! Every CSV is UTF-8 with a header row, LF line endings and `.` decimals.
//! Floats are written in shortest round-trip form so a file read back
//! reproduces the values bit for bit. Columns are matched by header name.
//! Readers report problems as [`Error::Schema`] with the 1-based line
//! number (the header is line 1) and the column name.

mod geojson;

pub use geojson::{emit_spray_map, GeoOrigin};

use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::{StringRecord, Terminator};
use serde::{Deserialize, Serialize};

use crate::analysis::{Knockdown, TreatmentStats};
use crate::controller::SprayEvent;
use crate::detector::{ClassFlags, DetectionRecord};
use crate::error::{Error, Result};
use crate::fieldgen::{SpeciesClass, Treatment, WeedInstance};
use crate::waterq::{
    composite_concentration, event_load, RunoffEvent, RunoffPair, RunoffSample, SamplingPlan,
};

pub const FIELD_HEADER: [&str; 5] = ["id", "species", "along_m", "cross_m", "detectability"];
pub const SPRAY_EVENT_HEADER: [&str; 5] =
    ["nozzle", "start_m", "start_ms", "duration_ms", "volume_l"];
pub const DETECTION_HEADER: [&str; 5] = ["frame", "tile", "t_ms", "predicted", "truth_ids"];
pub const TREATMENT_HEADER: [&str; 9] = [
    "trial",
    "treatment",
    "weeds_sprayed",
    "weeds_missed",
    "hit_rate",
    "usage_l_ha",
    "images_total",
    "images_with_detection",
    "area_ha",
];
pub const RUNOFF_SUMMARY_HEADER: [&str; 6] = [
    "trial",
    "ingredient",
    "blanket_conc_ugL",
    "blanket_load_gha",
    "spot_conc_ugL",
    "spot_load_gha",
];
pub const RUNOFF_SERIES_HEADER: [&str; 3] = ["t_min", "flow_lps", "conc_ugL"];

/// Separator inside list-valued cells.
const LIST_SEP: char = ';';

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(w)
}

fn write_err(source: &str, e: impl Display) -> Error {
    Error::io(source, std::io::Error::other(e.to_string()))
}

fn write_rows<W: Write>(
    w: W,
    source: &str,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header).map_err(|e| write_err(source, e))?;
    for row in rows {
        out.write_record(&row).map_err(|e| write_err(source, e))?;
    }
    out.flush().map_err(|e| Error::io(source, e))
}

fn opt<T: Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(&LIST_SEP.to_string())
}

/// A parsed CSV: header positions plus the data records with their lines.
struct Table {
    source: String,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, StringRecord)>,
}

struct Row<'a> {
    table: &'a Table,
    line: usize,
    record: &'a StringRecord,
}

impl Table {
    fn read<R: Read>(source: &str, reader: R, required: &[&str], optional: &[&str]) -> Result<Self> {
        let schema = |row: usize, column: &str, message: String| Error::Schema {
            source_name: source.to_string(),
            row,
            column: column.to_string(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| schema(1, "", e.to_string()))?.clone();
        if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
            return Err(Error::EmptyInput {
                path: source.to_string(),
            });
        }
        let mut columns = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            let name = h.trim();
            if !required.contains(&name) && !optional.contains(&name) {
                return Err(schema(1, name, "unexpected column".into()));
            }
            if columns.insert(name.to_string(), i).is_some() {
                return Err(schema(1, name, "duplicate column".into()));
            }
        }
        if let Some(missing) = required.iter().find(|c| !columns.contains_key(**c)) {
            return Err(schema(1, missing, "missing required column".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                schema(line, "", e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            rows.push((line, rec));
        }
        Ok(Self {
            source: source.to_string(),
            columns,
            rows,
        })
    }

    fn require_rows(self) -> Result<Self> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput { path: self.source });
        }
        Ok(self)
    }

    fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl Row<'_> {
    fn error(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            source_name: self.table.source.clone(),
            row: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn cell(&self, column: &str) -> Option<&str> {
        self.table
            .columns
            .get(column)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn get<T>(&self, column: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.opt(column)?
            .ok_or_else(|| self.error(column, "value required"))
    }

    fn opt<T>(&self, column: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.cell(column)
            .map(|s| s.parse::<T>().map_err(|e| self.error(column, format!("`{s}`: {e}"))))
            .transpose()
    }

    fn finite(&self, column: &str) -> Result<f64> {
        let v: f64 = self.get(column)?;
        if !v.is_finite() {
            return Err(self.error(column, "value must be finite"));
        }
        Ok(v)
    }

    fn non_negative(&self, column: &str) -> Result<f64> {
        let v = self.finite(column)?;
        if v < 0.0 {
            return Err(self.error(column, format!("must be >= 0, got {v}")));
        }
        Ok(v)
    }

    fn list<T>(&self, column: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.cell(column) {
            None => Ok(Vec::new()),
            Some(s) => s
                .split(LIST_SEP)
                .map(|p| {
                    p.trim()
                        .parse::<T>()
                        .map_err(|e| self.error(column, format!("`{p}`: {e}")))
                })
                .collect(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

// ---- field ----

pub fn write_field<W: Write>(w: W, weeds: &[WeedInstance]) -> Result<()> {
    write_rows(
        w,
        "field",
        &FIELD_HEADER,
        weeds.iter().map(|x| {
            vec![
                x.id.to_string(),
                x.species.to_string(),
                x.along_m.to_string(),
                x.cross_m.to_string(),
                x.detectability.to_string(),
            ]
        }),
    )
}

pub fn read_field<R: Read>(source: &str, r: R) -> Result<Vec<WeedInstance>> {
    let table = Table::read(source, r, &FIELD_HEADER, &[])?;
    table
        .rows()
        .map(|row| {
            let detectability = row.finite("detectability")?;
            if !(detectability > 0.0 && detectability <= 1.0) {
                return Err(row.error("detectability", "must be in (0, 1]"));
            }
            Ok(WeedInstance {
                id: row.get("id")?,
                species: row.get::<SpeciesClass>("species")?,
                along_m: row.finite("along_m")?,
                cross_m: row.finite("cross_m")?,
                detectability,
            })
        })
        .collect()
}

// ---- spray events ----

/// The geo-reference of an event is not part of this format.
pub fn write_spray_events<W: Write>(w: W, events: &[SprayEvent]) -> Result<()> {
    write_rows(
        w,
        "spray events",
        &SPRAY_EVENT_HEADER,
        events.iter().map(|e| {
            vec![
                e.nozzle_id.to_string(),
                e.start_position_m.to_string(),
                e.start_time_ms.to_string(),
                e.duration_ms.to_string(),
                e.volume_l.to_string(),
            ]
        }),
    )
}

pub fn read_spray_events<R: Read>(source: &str, r: R) -> Result<Vec<SprayEvent>> {
    let table = Table::read(source, r, &SPRAY_EVENT_HEADER, &[])?;
    table
        .rows()
        .map(|row| {
            let duration_ms = row.finite("duration_ms")?;
            if duration_ms <= 0.0 {
                return Err(row.error("duration_ms", "must be > 0"));
            }
            Ok(SprayEvent {
                nozzle_id: row.get("nozzle")?,
                start_position_m: row.finite("start_m")?,
                start_time_ms: row.finite("start_ms")?,
                duration_ms,
                volume_l: row.non_negative("volume_l")?,
                geo: None,
            })
        })
        .collect()
}

// ---- detections ----

fn flags_to_cell(flags: &ClassFlags) -> String {
    join(
        SpeciesClass::ALL
            .iter()
            .filter(|c| flags[c.index()])
            .map(|c| c.as_str()),
    )
}

pub fn write_detections<W: Write>(w: W, records: &[DetectionRecord]) -> Result<()> {
    write_rows(
        w,
        "detections",
        &DETECTION_HEADER,
        records.iter().map(|d| {
            vec![
                d.frame_id.to_string(),
                d.tile_id.to_string(),
                d.timestamp_ms.to_string(),
                flags_to_cell(&d.predicted),
                join(&d.truth_weed_ids),
            ]
        }),
    )
}

pub fn read_detections<R: Read>(source: &str, r: R) -> Result<Vec<DetectionRecord>> {
    let table = Table::read(source, r, &DETECTION_HEADER, &[])?;
    table
        .rows()
        .map(|row| {
            let mut predicted = ClassFlags::default();
            for c in row.list::<SpeciesClass>("predicted")? {
                predicted[c.index()] = true;
            }
            Ok(DetectionRecord {
                frame_id: row.get("frame")?,
                tile_id: row.get("tile")?,
                timestamp_ms: row.finite("t_ms")?,
                predicted,
                truth_weed_ids: row.list("truth_ids")?,
            })
        })
        .collect()
}

// ---- treatment statistics ----

/// One row of a treatments file: the statistics of one treatment in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRecord {
    pub trial_id: String,
    pub treatment: Treatment,
    pub stats: TreatmentStats,
}

pub fn write_treatments<W: Write>(w: W, records: &[TreatmentRecord]) -> Result<()> {
    write_rows(
        w,
        "treatments",
        &TREATMENT_HEADER,
        records.iter().map(|r| {
            let (sprayed, missed, rate) = match r.stats.knockdown {
                Some(Knockdown::Counts { sprayed, missed }) => (Some(sprayed), Some(missed), None),
                Some(Knockdown::Rate(x)) => (None, None, Some(x)),
                None => (None, None, None),
            };
            vec![
                r.trial_id.clone(),
                r.treatment.to_string(),
                opt(sprayed),
                opt(missed),
                opt(rate),
                r.stats.usage_l_per_ha.to_string(),
                opt(r.stats.images_total),
                opt(r.stats.images_with_detection),
                opt(r.stats.area_ha),
            ]
        }),
    )
}

/// Knockdown is given either as `weeds_sprayed` + `weeds_missed` or as a
/// `hit_rate` fraction; all columns but trial, treatment and usage may be
/// left empty.
pub fn read_treatments<R: Read>(source: &str, r: R) -> Result<Vec<TreatmentRecord>> {
    let table = Table::read(source, r, &TREATMENT_HEADER[..2], &TREATMENT_HEADER[2..])?;
    if !table.columns.contains_key("usage_l_ha") {
        return Err(Error::Schema {
            source_name: source.to_string(),
            row: 1,
            column: "usage_l_ha".into(),
            message: "missing required column".into(),
        });
    }
    let table = table.require_rows()?;
    let mut seen: HashMap<(String, Treatment), usize> = HashMap::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for row in table.rows() {
        let trial_id: String = row.get("trial")?;
        let treatment: Treatment = row.get("treatment")?;
        if let Some(first) = seen.insert((trial_id.clone(), treatment), row.line) {
            return Err(row.error(
                "treatment",
                format!("trial {trial_id} already has a {treatment} row on line {first}"),
            ));
        }
        let counts = (row.opt::<u64>("weeds_sprayed")?, row.opt::<u64>("weeds_missed")?);
        let rate = row.opt::<f64>("hit_rate")?;
        let knockdown = match (counts, rate) {
            ((Some(_), None), _) => return Err(row.error("weeds_missed", "needed with weeds_sprayed")),
            ((None, Some(_)), _) => return Err(row.error("weeds_sprayed", "needed with weeds_missed")),
            ((Some(_), Some(_)), Some(_)) => {
                return Err(row.error("hit_rate", "give either counts or hit_rate, not both"))
            }
            ((Some(sprayed), Some(missed)), None) => {
                if sprayed + missed == 0 {
                    return Err(row.error("weeds_sprayed", "no weeds assessed"));
                }
                Some(Knockdown::Counts { sprayed, missed })
            }
            ((None, None), Some(x)) => {
                if !(0.0..=1.0).contains(&x) {
                    return Err(row.error("hit_rate", format!("fraction in [0, 1] expected, got {x}")));
                }
                Some(Knockdown::Rate(x))
            }
            ((None, None), None) => None,
        };
        let images_total = row.opt::<u64>("images_total")?;
        let images_with_detection = row.opt::<u64>("images_with_detection")?;
        match (images_total, images_with_detection) {
            (Some(t), Some(w)) if w > t => {
                return Err(row.error("images_with_detection", "exceeds images_total"))
            }
            (Some(0), Some(_)) => return Err(row.error("images_total", "must be > 0")),
            _ => {}
        }
        let area_ha = row.opt::<f64>("area_ha")?;
        if area_ha.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
            return Err(row.error("area_ha", "must be > 0"));
        }
        out.push(TreatmentRecord {
            trial_id,
            treatment,
            stats: TreatmentStats {
                knockdown,
                usage_l_per_ha: row.non_negative("usage_l_ha")?,
                images_total,
                images_with_detection,
                area_ha,
            },
        });
    }
    Ok(out)
}

/// Groups treatment rows into (trial, spot, blanket) in order of first appearance.
pub fn pair_treatments(
    source: &str,
    records: &[TreatmentRecord],
) -> Result<Vec<(String, TreatmentStats, TreatmentStats)>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_trial: HashMap<&str, [Option<TreatmentStats>; 2]> = HashMap::new();
    for r in records {
        let slot = by_trial.entry(&r.trial_id).or_insert_with(|| {
            order.push(r.trial_id.clone());
            [None, None]
        });
        slot[(r.treatment == Treatment::Blanket) as usize] = Some(r.stats);
    }
    order
        .into_iter()
        .map(|id| match by_trial[id.as_str()] {
            [Some(spot), Some(blanket)] => Ok((id, spot, blanket)),
            [s, _] => Err(Error::Schema {
                source_name: source.to_string(),
                row: 0,
                column: "treatment".into(),
                message: format!(
                    "trial {id} has no {} row",
                    if s.is_none() { Treatment::Spot } else { Treatment::Blanket }
                ),
            }),
        })
        .collect()
}

// ---- runoff ----

pub fn write_runoff_summary<W: Write>(w: W, pairs: &[RunoffPair]) -> Result<()> {
    write_rows(
        w,
        "runoff summary",
        &RUNOFF_SUMMARY_HEADER,
        pairs.iter().map(|p| {
            vec![
                p.trial_id.clone(),
                p.active_ingredient.clone(),
                p.blanket_concentration_ugl.to_string(),
                p.blanket_load_g_per_ha.to_string(),
                p.spot_concentration_ugl.to_string(),
                p.spot_load_g_per_ha.to_string(),
            ]
        }),
    )
}

pub fn read_runoff_summary<R: Read>(source: &str, r: R) -> Result<Vec<RunoffPair>> {
    let table = Table::read(source, r, &RUNOFF_SUMMARY_HEADER, &[])?.require_rows()?;
    table
        .rows()
        .map(|row| {
            Ok(RunoffPair {
                trial_id: row.get("trial")?,
                active_ingredient: row.get("ingredient")?,
                blanket_concentration_ugl: row.non_negative("blanket_conc_ugL")?,
                blanket_load_g_per_ha: row.non_negative("blanket_load_gha")?,
                spot_concentration_ugl: row.non_negative("spot_conc_ugL")?,
                spot_load_g_per_ha: row.non_negative("spot_load_gha")?,
            })
        })
        .collect()
}

pub fn write_runoff_series<W: Write>(w: W, samples: &[RunoffSample]) -> Result<()> {
    write_rows(
        w,
        "runoff series",
        &RUNOFF_SERIES_HEADER,
        samples.iter().map(|s| {
            vec![s.t_min.to_string(), s.flow_lps.to_string(), opt(s.conc_ugl)]
        }),
    )
}

/// `conc_ugL` may be left empty for flow-only readings.
pub fn read_runoff_series<R: Read>(source: &str, r: R) -> Result<Vec<RunoffSample>> {
    let table = Table::read(source, r, &RUNOFF_SERIES_HEADER, &[])?.require_rows()?;
    let mut out: Vec<RunoffSample> = Vec::with_capacity(table.rows.len());
    for row in table.rows() {
        let t_min = row.non_negative("t_min")?;
        if out.last().is_some_and(|p| t_min <= p.t_min) {
            return Err(row.error("t_min", "times must be strictly increasing"));
        }
        let conc_ugl = match row.opt::<f64>("conc_ugL")? {
            Some(c) if !(c >= 0.0 && c.is_finite()) => {
                return Err(row.error("conc_ugL", "must be >= 0"))
            }
            c => c,
        };
        out.push(RunoffSample {
            t_min,
            flow_lps: row.non_negative("flow_lps")?,
            conc_ugl,
        });
    }
    Ok(out)
}

/// A set of measured runoff events: one series file per active ingredient
/// and treatment, plus the sampling plan used in the field.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunoffManifest {
    #[serde(default)]
    pub sampling: SamplingPlan,
    #[serde(rename = "event")]
    pub events: Vec<RunoffManifestEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunoffManifestEntry {
    pub trial: String,
    pub ingredient: String,
    pub treatment: Treatment,
    pub area_ha: f64,
    /// Relative paths resolve against the manifest's directory.
    pub series: PathBuf,
}

/// Reads a manifest and every series it lists, computing composite
/// concentration and load for each, then pairs blanket with spot by
/// trial and ingredient.
pub fn read_runoff_manifest(path: &Path) -> Result<Vec<RunoffPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::EmptyInput { path: name(path) });
    }
    let manifest: RunoffManifest = toml::from_str(&text).map_err(|e| Error::Config {
        field: name(path),
        message: e.to_string(),
    })?;
    manifest.sampling.validate()?;
    if manifest.events.is_empty() {
        return Err(Error::EmptyInput { path: name(path) });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut events: Vec<(String, RunoffEvent)> = Vec::new();
    for entry in &manifest.events {
        let series_path = base.join(&entry.series);
        let samples = read_runoff_series(&name(&series_path), open(&series_path)?)?;
        let composite = composite_concentration(&samples, &manifest.sampling)?;
        let load = event_load(&samples, entry.area_ha)?;
        events.push((
            entry.trial.clone(),
            RunoffEvent {
                active_ingredient: entry.ingredient.clone(),
                treatment: entry.treatment,
                area_ha: entry.area_ha,
                samples,
                composite_concentration_ugl: composite.concentration_ugl,
                load_g_per_ha: load,
            },
        ));
    }
    let mut pairs = Vec::new();
    for (trial, ev) in events.iter().filter(|(_, e)| e.treatment == Treatment::Blanket) {
        let spot = events
            .iter()
            .find(|(t, e)| {
                t == trial
                    && e.treatment == Treatment::Spot
                    && e.active_ingredient == ev.active_ingredient
            })
            .ok_or_else(|| Error::Config {
                field: name(path),
                message: format!("trial {trial}, {}: no spot event", ev.active_ingredient),
            })?;
        pairs.push(RunoffPair::from_events(trial.clone(), ev, &spot.1)?);
    }
    let unmatched = events.iter().find(|(t, e)| {
        e.treatment == Treatment::Spot
            && !pairs
                .iter()
                .any(|p| &p.trial_id == t && p.active_ingredient == e.active_ingredient)
    });
    if let Some((t, e)) = unmatched {
        return Err(Error::Config {
            field: name(path),
            message: format!("trial {t}, {}: no blanket event", e.active_ingredient),
        });
    }
    Ok(pairs)
}

// ---- path wrappers ----

macro_rules! path_io {
    ($read_path:ident, $read:ident, $write_path:ident, $write:ident, $t:ty) => {
        pub fn $read_path(path: &Path) -> Result<Vec<$t>> {
            $read(&name(path), open(path)?)
        }

        pub fn $write_path(path: &Path, items: &[$t]) -> Result<()> {
            let mut w = create(path)?;
            $write(&mut w, items).map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })?;
            w.flush().map_err(|e| Error::io(path, e))
        }
    };
}

path_io!(read_field_path, read_field, write_field_path, write_field, WeedInstance);
path_io!(read_spray_events_path, read_spray_events, write_spray_events_path, write_spray_events, SprayEvent);
path_io!(read_detections_path, read_detections, write_detections_path, write_detections, DetectionRecord);
path_io!(read_treatments_path, read_treatments, write_treatments_path, write_treatments, TreatmentRecord);
path_io!(read_runoff_summary_path, read_runoff_summary, write_runoff_summary_path, write_runoff_summary, RunoffPair);
path_io!(read_runoff_series_path, read_runoff_series, write_runoff_series_path, write_runoff_series, RunoffSample);
