//! File-based orchestration behind the `roadtwin` subcommands.
//!
//! Every run reads its inputs, computes everything in memory and only then
//! writes its outputs, each through a temporary file renamed into place.
//! A failure while committing removes whatever was already written.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{DayFilter, HolidayCalendar};
use crate::config::PipelineConfig;
use crate::embedding::{build_embedding, normalize_pool, write_embeddings_csv, Overrides, RoadEmbedding, FEATURES};
use crate::error::{Error, Result};
use crate::evaluation::{
    generation_benchmark, nrmse, rmse, selection_benchmark, write_errors_csv, write_summary_csv, BenchmarkReport,
    Candidate, DayErrors, GenerationBenchmark, GenerationReport, ReportMetadata, TargetReport,
};
use crate::fmt::sig6;
use crate::generation::{fit_cluster_model, write_generated_csv, Fallback, GeneratedDay, Generator, NseGenerator};
use crate::geo::Coord;
use crate::graph::io::{write_edges_csv, write_nodes_csv, GraphManifest};
use crate::graph::{ego_graph, insert_central_node, CentralNode};
use crate::osm::{build_graph, parse_osm_extract, HighwayClass, RawRoadData};
use crate::plot::profile_svg;
use crate::selection::{select_by_embedding, select_by_geography, write_ranking_csv, SelectionResult};
use crate::traffic::{
    clean_series, daily_profile, load_series_by_sensor, mean_weekday_flow, slice_day, write_profile_csv, CleaningStats,
    TrafficSeries,
};

/// Environment variable capping worker threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "ROADTWIN_THREADS";

const HASH_PREFIX: &str = "# config_hash=";

/// Methodological choices recorded in every report.
pub const DECISIONS: [&str; 9] = [
    "features min-max normalized across the sensor pool; unreachable travel times map to 1",
    "each segment's graph covers radius_m around its sensor; the ego-graph spans `hops` undirected hops",
    "travel time to motorway/primary measured on the full graph, link roads counting as their base class",
    "profiles are slotwise medians over complete working weekdays",
    "cleaning: iterated spike removal above spike_factor x slot median, gaps up to max_gap slots interpolated",
    "day classes: weekday + 7 x holiday; empty classes fall back to the non-holiday weekday, then to all days",
    "Friedman statistic uses mid-ranks without the tie correction term",
    "days missing a method's output are excluded listwise from summaries and tests",
    "best_methods lists every method not significantly beaten under the Nemenyi test",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub sensor_id: String,
    pub coord: Coord,
    pub road_type_override: Option<HighwayClass>,
    pub lanes_override: Option<u32>,
}

impl Sensor {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            road_type: self.road_type_override,
            lanes: self.lanes_override,
        }
    }
}

#[derive(Debug, Deserialize)]
struct SensorRow {
    sensor_id: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    road_type_override: Option<String>,
    #[serde(default)]
    lanes_override: Option<u32>,
}

/// Parses `sensor_id,lat,lon,road_type_override,lanes_override`, sorted by id.
pub fn parse_sensors(bytes: &[u8]) -> Result<Vec<Sensor>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let mut out: BTreeMap<String, Sensor> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SensorRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Format {
            row: line,
            message: e.to_string(),
        })?;
        let bad = |message: String| Error::Format { row: line, message };
        if row.sensor_id.is_empty() {
            return Err(bad("empty sensor_id".into()));
        }
        if !(-90.0..=90.0).contains(&row.lat) || !(-180.0..=180.0).contains(&row.lon) {
            return Err(bad(format!("coordinates ({}, {}) out of range", row.lat, row.lon)));
        }
        let road_type = match row.road_type_override.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<HighwayClass>()
                    .map_err(|_| bad(format!("unknown road type '{s}'")))?,
            ),
        };
        if row.lanes_override == Some(0) {
            return Err(bad("lanes_override must be at least 1".into()));
        }
        let sensor = Sensor {
            sensor_id: row.sensor_id.clone(),
            coord: Coord::new(row.lat, row.lon),
            road_type_override: road_type,
            lanes_override: row.lanes_override,
        };
        if out.insert(row.sensor_id.clone(), sensor).is_some() {
            return Err(bad(format!("duplicate sensor {}", row.sensor_id)));
        }
    }
    if out.is_empty() {
        return Err(Error::Format {
            row: 1,
            message: "no sensors".into(),
        });
    }
    Ok(out.into_values().collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_sensors(cfg: &PipelineConfig) -> Result<Vec<Sensor>> {
    let path = cfg.input("sensors")?;
    parse_sensors(&read(&path)?).map_err(|e| in_file(&path, e))
}

pub fn load_osm(cfg: &PipelineConfig) -> Result<RawRoadData> {
    let path = cfg.input("osm")?;
    parse_osm_extract(&read(&path)?)
}

/// An empty calendar when no holiday file is configured.
pub fn load_holidays(cfg: &PipelineConfig) -> Result<HolidayCalendar> {
    match cfg.holidays_path() {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            HolidayCalendar::parse(&text).map_err(|e| in_file(&p, e))
        }
        None => Ok(HolidayCalendar::default()),
    }
}

/// Names the file in row-level format errors.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Format { row, message } => Error::Format {
            row,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Every `*.csv` in the traffic directory, cleaned, keyed by sensor.
pub fn load_traffic(cfg: &PipelineConfig) -> Result<BTreeMap<String, (TrafficSeries, CleaningStats)>> {
    let dir = cfg.input("traffic_dir")?;
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let loaded = files
        .par_iter()
        .map(|p| load_series_by_sensor(&read(p)?, cfg.interval_min).map_err(|e| in_file(p, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut raw = BTreeMap::new();
    for (path, map) in files.iter().zip(loaded) {
        for (id, series) in map {
            if raw.insert(id.clone(), series).is_some() {
                return Err(Error::argument(format!(
                    "sensor {id} appears in more than one traffic file (again in {})",
                    path.display()
                )));
            }
        }
    }
    let cleaning = cfg.cleaning();
    let cleaned: Vec<(String, (TrafficSeries, CleaningStats))> = raw
        .into_par_iter()
        .map(|(id, s)| (id, clean_series(&s, &cleaning)))
        .collect();
    Ok(cleaned.into_iter().collect())
}

/// Runs `f` on a pool sized by [`THREADS_ENV`].
pub fn with_threads<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::argument(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")))?,
        _ => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// Builds the segment's own graph, inserts its central node and computes
/// the raw embedding.
pub fn segment_embedding(
    raw: &RawRoadData,
    sensor: &Sensor,
    cfg: &PipelineConfig,
) -> Result<(RoadEmbedding, CentralNode)> {
    let graph = build_graph(raw, sensor.coord, cfg.radius_m, &cfg.speeds())?;
    let (graph, center) = insert_central_node(&graph, &sensor.sensor_id, sensor.coord, cfg.snap_threshold_m)?;
    let ego = ego_graph(&graph, &center, cfg.hops)?;
    let embedding = build_embedding(&graph, &ego, &center, sensor.overrides())?;
    Ok((embedding, center))
}

/// Raw embeddings of every sensor (pool order preserved), then normalized together.
pub fn pool_embeddings(
    raw: &RawRoadData,
    sensors: &[Sensor],
    cfg: &PipelineConfig,
) -> Result<Vec<(RoadEmbedding, CentralNode)>> {
    let raw_embeddings = sensors
        .par_iter()
        .map(|s| segment_embedding(raw, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let normalized = normalize_pool(&raw_embeddings.iter().map(|(e, _)| e.clone()).collect::<Vec<_>>())?;
    Ok(normalized
        .into_iter()
        .zip(raw_embeddings)
        .map(|(e, (_, c))| (e, c))
        .collect())
}

pub fn road_type_of(sensor: &Sensor, center: &CentralNode) -> HighwayClass {
    sensor.road_type_override.unwrap_or(center.host_edge_class)
}

fn sensor_centroid(sensors: &[Sensor]) -> Coord {
    let n = sensors.len() as f64;
    let (lat, lon) = sensors
        .iter()
        .fold((0.0, 0.0), |(a, b), s| (a + s.coord.lat, b + s.coord.lon));
    Coord::new(lat / n, lon / n)
}

/// Files produced by one run, written only once everything is computed.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    /// Adds a CSV with the config hash as a leading comment line.
    pub fn add_csv(&mut self, name: impl Into<PathBuf>, hash: &str, body: Vec<u8>) {
        let mut bytes = format!("{HASH_PREFIX}{hash}\n").into_bytes();
        bytes.extend(body);
        self.add(name, bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<PathBuf>, value: &T) -> Result<()> {
        let v = round_json(serde_json::to_value(value)?);
        let mut bytes = serde_json::to_vec_pretty(&v)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every file under `dir`; on failure nothing from this run remains.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written: Vec<PathBuf> = Vec::new();
        let mut temps: Vec<(PathBuf, PathBuf)> = Vec::new();
        let result = (|| {
            for (name, bytes) in &self.files {
                let dest = dir.join(name);
                if let Some(parent) = dest.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                let file_name = dest.file_name().expect("output has a file name").to_string_lossy();
                let tmp = dest.with_file_name(format!(".{file_name}.tmp"));
                fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
                temps.push((tmp, dest));
            }
            for (tmp, dest) in &temps {
                fs::rename(tmp, dest).map_err(|e| Error::io(dest, e))?;
                written.push(dest.clone());
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (tmp, _) in &temps {
                let _ = fs::remove_file(tmp);
            }
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e);
        }
        Ok(written)
    }
}

/// Rounds every float in a JSON tree to six significant digits.
pub fn round_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            sig6(x)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// The hash in a leading `# config_hash=` line, if present.
pub fn embedded_hash(bytes: &[u8]) -> Option<String> {
    let first = bytes.split(|&b| b == b'\n').next()?;
    let line = std::str::from_utf8(first).ok()?.trim_end_matches('\r');
    line.strip_prefix(HASH_PREFIX).map(str::to_string)
}

/// Rejects artifacts produced under a different configuration.
pub fn check_hash(path: &Path, bytes: &[u8], expected: &str) -> Result<()> {
    match embedded_hash(bytes) {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(Error::argument(format!(
            "{} was produced with config {h}, current config is {expected}",
            path.display()
        ))),
        None => Err(Error::argument(format!("{} carries no config hash", path.display()))),
    }
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Serialize)]
struct IngestManifest<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    graph: GraphManifest,
    ways_by_class: BTreeMap<String, usize>,
}

pub fn ingest(cfg: &PipelineConfig) -> Result<Outputs> {
    let hash = cfg.hash();
    let raw = load_osm(cfg)?;
    let center = match cfg.center() {
        Some(c) => c,
        None => sensor_centroid(&load_sensors(cfg)?),
    };
    let graph = build_graph(&raw, center, cfg.radius_m, &cfg.speeds())?;
    let mut out = Outputs::default();
    out.add_csv("nodes.csv", &hash, csv_bytes(|b| write_nodes_csv(&graph, b))?);
    out.add_csv("edges.csv", &hash, csv_bytes(|b| write_edges_csv(&graph, b))?);
    out.add_json(
        "graph.json",
        &IngestManifest {
            config_hash: &hash,
            graph: GraphManifest {
                center,
                radius_m: cfg.radius_m,
                node_count: graph.node_count(),
                edge_count: graph.edge_count(),
            },
            ways_by_class: raw
                .class_counts()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        },
    )?;
    Ok(out)
}

// ---------------------------------------------------------------- embed

pub fn embed(cfg: &PipelineConfig) -> Result<Outputs> {
    let hash = cfg.hash();
    let raw = load_osm(cfg)?;
    let sensors = load_sensors(cfg)?;
    let pool = with_threads(|| pool_embeddings(&raw, &sensors, cfg))?;
    let embeddings: Vec<RoadEmbedding> = pool.iter().map(|(e, _)| e.clone()).collect();
    let centers: Vec<&CentralNode> = pool.iter().map(|(_, c)| c).collect();
    let mut out = Outputs::default();
    out.add_csv(
        "embeddings.csv",
        &hash,
        csv_bytes(|b| write_embeddings_csv(&embeddings, b))?,
    );
    out.add_csv(
        "central_nodes.csv",
        &hash,
        csv_bytes(|b| write_central_nodes(&centers, b))?,
    );
    Ok(out)
}

fn write_central_nodes(centers: &[&CentralNode], buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "sensor_id",
        "node_id",
        "lat",
        "lon",
        "host_class",
        "host_lanes",
        "snap_distance_m",
        "reused_junction",
    ])?;
    for c in centers {
        w.write_record([
            c.sensor_id.clone(),
            c.node_id.to_string(),
            sig6(c.coord.lat),
            sig6(c.coord.lon),
            c.host_edge_class.to_string(),
            c.host_edge_lanes.map(|l| l.to_string()).unwrap_or_default(),
            sig6(c.snap_distance_m),
            c.reused_junction.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("central_nodes.csv", e))?;
    Ok(())
}

/// Reads an embeddings CSV (normalized columns required).
pub fn read_embeddings_csv(bytes: &[u8]) -> Result<Vec<RoadEmbedding>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| Error::Format { row: i + 2, message };
        if rec.len() != 1 + 2 * FEATURES {
            return Err(bad(format!("expected {} columns, got {}", 1 + 2 * FEATURES, rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| bad(format!("column {} is not a number: '{}'", j + 1, &rec[j])))
        };
        let mut raw = [0.0; FEATURES];
        let mut norm = [0.0; FEATURES];
        for f in 0..FEATURES {
            raw[f] = num(1 + f)?;
            norm[f] = num(1 + FEATURES + f)?;
        }
        let mut e = RoadEmbedding::from_raw(&rec[0], raw);
        e.normalized = Some(norm);
        out.push(e);
    }
    Ok(out)
}

// ---------------------------------------------------------------- select

#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub target_id: String,
    pub coord: Coord,
    pub road_type: Option<HighwayClass>,
    pub lanes: Option<u32>,
}

impl TargetSpec {
    fn as_sensor(&self) -> Sensor {
        Sensor {
            sensor_id: self.target_id.clone(),
            coord: self.coord,
            road_type_override: self.road_type,
            lanes_override: self.lanes,
        }
    }
}

/// Both selections for a target location, with the pool normalized
/// together with the target.
fn select_for(
    cfg: &PipelineConfig,
    raw: &RawRoadData,
    sensors: &[Sensor],
    target: &TargetSpec,
) -> Result<(SelectionResult, SelectionResult, RoadEmbedding)> {
    if sensors.iter().any(|s| s.sensor_id == target.target_id) {
        return Err(Error::argument(format!(
            "target id {} collides with a sensor id",
            target.target_id
        )));
    }
    let mut all = sensors.to_vec();
    all.push(target.as_sensor());
    let embedded = pool_embeddings(raw, &all, cfg)?;
    let mut embeddings: Vec<RoadEmbedding> = embedded.into_iter().map(|(e, _)| e).collect();
    let target_embedding = embeddings.pop().expect("target appended");
    let by_embedding = select_by_embedding(&target_embedding, &embeddings, cfg.distance)?;
    let coords: Vec<(String, Coord)> = sensors.iter().map(|s| (s.sensor_id.clone(), s.coord)).collect();
    let by_geography = select_by_geography(&target.target_id, target.coord, &coords)?;
    Ok((by_embedding, by_geography, target_embedding))
}

pub fn select(cfg: &PipelineConfig, target: &TargetSpec) -> Result<Outputs> {
    let hash = cfg.hash();
    let raw = load_osm(cfg)?;
    let sensors = load_sensors(cfg)?;
    let (e, g, _) = with_threads(|| select_for(cfg, &raw, &sensors, target))?;
    let mut out = Outputs::default();
    out.add_csv(
        format!("selection_{}.csv", target.target_id),
        &hash,
        csv_bytes(|b| write_ranking_csv(&[e, g], b))?,
    );
    Ok(out)
}

// ---------------------------------------------------------------- profile

pub fn profile(cfg: &PipelineConfig, sensor: Option<&str>, filter: DayFilter) -> Result<Outputs> {
    let hash = cfg.hash();
    let holidays = load_holidays(cfg)?;
    let traffic = with_threads(|| load_traffic(cfg))?;
    let ids: Vec<&String> = match sensor {
        Some(id) => vec![traffic
            .keys()
            .find(|k| k.as_str() == id)
            .ok_or_else(|| Error::argument(format!("no traffic for sensor {id}")))?],
        None => traffic.keys().collect(),
    };
    let mut out = Outputs::default();
    for id in ids {
        let p = daily_profile(&traffic[id].0, filter, &holidays)?;
        out.add_csv(
            format!("profile_{id}.csv"),
            &hash,
            csv_bytes(|b| write_profile_csv(&p, b))?,
        );
        out.add(format!("profile_{id}.svg"), profile_svg(&p, Some(&hash)).into_bytes());
    }
    Ok(out)
}

// ---------------------------------------------------------------- synthesize

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Cluster,
    Nse,
    Both,
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(MethodChoice::Cluster),
            "nse" => Ok(MethodChoice::Nse),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::argument(format!("unknown method '{s}' (cluster, nse, both)"))),
        }
    }
}

fn series_of<'a>(traffic: &'a BTreeMap<String, (TrafficSeries, CleaningStats)>, id: &str) -> Result<&'a TrafficSeries> {
    traffic
        .get(id)
        .map(|(s, _)| s)
        .ok_or_else(|| Error::argument(format!("no traffic for sensor {id}")))
}

/// Generated days for `dates` from `source`; days NSE cannot cover are an error.
fn synthesize_days(
    source: &TrafficSeries,
    holidays: &HolidayCalendar,
    method: MethodChoice,
    dates: &[NaiveDate],
) -> Result<Vec<(String, GeneratedDay)>> {
    let cluster = match method {
        MethodChoice::Nse => None,
        _ => Some(fit_cluster_model(source, holidays)?),
    };
    let nse = NseGenerator { source };
    let mut gens: Vec<&dyn Generator> = Vec::new();
    if let Some(c) = &cluster {
        gens.push(c);
    }
    if method != MethodChoice::Cluster {
        gens.push(&nse);
    }
    let mut rows = Vec::new();
    for g in gens {
        for &d in dates {
            rows.push((g.name().to_string(), g.generate(d, holidays)?));
        }
    }
    Ok(rows)
}

pub fn synthesize(
    cfg: &PipelineConfig,
    source_id: &str,
    target_id: Option<&str>,
    from: NaiveDate,
    to: NaiveDate,
    method: MethodChoice,
) -> Result<Outputs> {
    if to < from {
        return Err(Error::argument(format!("date range {from}..{to} is empty")));
    }
    let hash = cfg.hash();
    let holidays = load_holidays(cfg)?;
    let traffic = with_threads(|| load_traffic(cfg))?;
    let source = series_of(&traffic, source_id)?;
    let dates: Vec<NaiveDate> = from.iter_days().take_while(|d| *d <= to).collect();
    let target = target_id.unwrap_or(source_id).to_string();
    let rows: Vec<(String, String, GeneratedDay)> = synthesize_days(source, &holidays, method, &dates)?
        .into_iter()
        .map(|(m, d)| (target.clone(), m, d))
        .collect();
    let mut out = Outputs::default();
    out.add_csv(
        format!("generated_{target}.csv"),
        &hash,
        csv_bytes(|b| write_generated_csv(&rows, b))?,
    );
    Ok(out)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Deserialize)]
struct GeneratedRow {
    target_id: String,
    date: NaiveDate,
    method: String,
    slot_index: usize,
    flow: f64,
    fallback_used: Fallback,
}

/// Generated flows keyed by `(method, date)`.
pub type GeneratedCells = BTreeMap<(String, NaiveDate), (Vec<f64>, Fallback)>;

/// Groups a generated-day CSV into `(method, date) -> (flows, fallback)`.
pub fn read_generated_csv(bytes: &[u8]) -> Result<(BTreeSet<String>, GeneratedCells)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let mut targets = BTreeSet::new();
    let mut days = GeneratedCells::new();
    for (i, row) in rdr.deserialize::<GeneratedRow>().enumerate() {
        let line = i + 3;
        let row = row.map_err(|e| Error::Format {
            row: line,
            message: e.to_string(),
        })?;
        targets.insert(row.target_id);
        let entry = days
            .entry((row.method, row.date))
            .or_insert((Vec::new(), row.fallback_used));
        if row.slot_index != entry.0.len() {
            return Err(Error::Format {
                row: line,
                message: format!("slot {} out of order (expected {})", row.slot_index, entry.0.len()),
            });
        }
        entry.0.push(row.flow);
    }
    Ok((targets, days))
}

/// Scores generated-day files against a sensor's real traffic.
pub fn evaluate(cfg: &PipelineConfig, generated: &[PathBuf], target_id: &str) -> Result<Outputs> {
    if generated.is_empty() {
        return Err(Error::argument("no generated-day files given"));
    }
    let hash = cfg.hash();
    let mut cells = GeneratedCells::new();
    for p in generated {
        let bytes = read(p)?;
        check_hash(p, &bytes, &hash)?;
        let (_, days) = read_generated_csv(&bytes).map_err(|e| in_file(p, e))?;
        for (k, v) in days {
            if cells.insert(k.clone(), v).is_some() {
                return Err(Error::argument(format!(
                    "{} repeats method {} on {}",
                    p.display(),
                    k.0,
                    k.1
                )));
            }
        }
    }
    let holidays = load_holidays(cfg)?;
    let traffic = with_threads(|| load_traffic(cfg))?;
    let real = series_of(&traffic, target_id)?;
    let mean_flow = mean_weekday_flow(real, &holidays)?;

    let methods: Vec<String> = cells
        .keys()
        .map(|(m, _)| m.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dates: BTreeSet<NaiveDate> = cells.keys().map(|(_, d)| *d).collect();
    let mut days = Vec::new();
    for date in dates {
        let Ok(truth) = slice_day(real, date) else {
            continue;
        };
        let mut row = DayErrors {
            date,
            rmse: Vec::new(),
            nrmse: Vec::new(),
            fallback: Vec::new(),
        };
        for m in &methods {
            match cells.get(&(m.clone(), date)) {
                Some((flows, fb)) => {
                    let r = rmse(&truth, flows)?;
                    row.rmse.push(Some(r));
                    row.nrmse.push(Some(nrmse(r, mean_flow)?));
                    row.fallback.push(*fb);
                }
                None => {
                    row.rmse.push(None);
                    row.nrmse.push(None);
                    row.fallback.push(Fallback::None);
                }
            }
        }
        days.push(row);
    }
    let bench = GenerationBenchmark::from_days(target_id.to_string(), methods, mean_flow, days);
    let report = GenerationReport::new(String::new(), bench, cfg.alpha, cfg.nemenyi_q)?;
    let mut out = Outputs::default();
    out.add_csv(
        format!("errors_{target_id}.csv"),
        &hash,
        csv_bytes(|b| write_errors_csv(&report.benchmark, b))?,
    );
    out.add_json(
        format!("evaluation_{target_id}.json"),
        &serde_json::json!({ "config_hash": hash, "evaluation": report }),
    )?;
    Ok(out)
}

// ---------------------------------------------------------------- benchmark

/// The full leave-one-out study.
///
/// `embeddings`, when given, is an embeddings CSV from `embed` under the
/// same configuration and replaces the embedding computation.
pub fn benchmark(cfg: &PipelineConfig, embeddings: Option<&Path>) -> Result<Outputs> {
    let hash = cfg.hash();
    let holidays = load_holidays(cfg)?;
    let sensors = load_sensors(cfg)?;
    let precomputed = match embeddings {
        Some(p) => {
            let bytes = read(p)?;
            check_hash(p, &bytes, &hash)?;
            Some(read_embeddings_csv(&bytes).map_err(|e| in_file(p, e))?)
        }
        None => None,
    };
    let raw = load_osm(cfg)?;
    let report = with_threads(|| run_benchmark(cfg, &hash, &raw, &sensors, &holidays, precomputed))?;

    let mut out = Outputs::default();
    out.add_json("report.json", &report)?;
    out.add_csv("summary.csv", &hash, csv_bytes(|b| write_summary_csv(&report, b))?);
    out.add_csv("selection.csv", &hash, csv_bytes(|b| write_outcomes_csv(&report, b))?);
    for t in &report.targets {
        if let Some(g) = &t.generation {
            out.add_csv(
                format!("errors/{}.csv", t.target_id),
                &hash,
                csv_bytes(|b| write_errors_csv(&g.benchmark, b))?,
            );
        }
    }
    Ok(out)
}

fn run_benchmark(
    cfg: &PipelineConfig,
    hash: &str,
    raw: &RawRoadData,
    sensors: &[Sensor],
    holidays: &HolidayCalendar,
    precomputed: Option<Vec<RoadEmbedding>>,
) -> Result<BenchmarkReport> {
    let traffic = load_traffic(cfg)?;
    let mut excluded: BTreeMap<String, String> = BTreeMap::new();

    // road types need the central nodes even with precomputed embeddings
    let computed = pool_embeddings(raw, sensors, cfg)?;
    let embeddings: Vec<RoadEmbedding> = match precomputed {
        Some(pre) => sensors
            .iter()
            .map(|s| {
                pre.iter()
                    .find(|e| e.sensor_id == s.sensor_id)
                    .cloned()
                    .ok_or_else(|| Error::argument(format!("embeddings file lacks sensor {}", s.sensor_id)))
            })
            .collect::<Result<_>>()?,
        None => computed.iter().map(|(e, _)| e.clone()).collect(),
    };

    let mut pool = Vec::new();
    let mut road_types = BTreeMap::new();
    for ((sensor, emb), (_, center)) in sensors.iter().zip(embeddings).zip(&computed) {
        road_types.insert(sensor.sensor_id.clone(), road_type_of(sensor, center).to_string());
        let Some((series, _)) = traffic.get(&sensor.sensor_id) else {
            excluded.insert(sensor.sensor_id.clone(), "no traffic data".into());
            continue;
        };
        let profile = daily_profile(series, DayFilter::Weekdays, holidays);
        let flow = mean_weekday_flow(series, holidays);
        match (profile, flow) {
            (Ok(profile), Ok(flow)) if flow > 0.0 => pool.push(Candidate {
                embedding: emb,
                coord: sensor.coord,
                profile,
                mean_weekday_flow: flow,
            }),
            (Err(e), _) | (_, Err(e)) => {
                excluded.insert(sensor.sensor_id.clone(), e.to_string());
            }
            _ => {
                excluded.insert(sensor.sensor_id.clone(), "mean weekday flow is zero".into());
            }
        }
    }

    let (outcomes, tally) = selection_benchmark(&pool, cfg.distance)?;
    let targets = pool
        .par_iter()
        .zip(outcomes)
        .map(|(cand, outcome)| {
            let target = &traffic[cand.id()].0;
            let source = &traffic[&outcome.embedding_selected].0;
            let cluster = fit_cluster_model(source, holidays)?;
            let nse = NseGenerator { source };
            let bench = generation_benchmark(target, &[&cluster, &nse], holidays, cand.mean_weekday_flow)?;
            let generation =
                GenerationReport::new(outcome.embedding_selected.clone(), bench, cfg.alpha, cfg.nemenyi_q)?;
            Ok(TargetReport {
                target_id: cand.id().to_string(),
                road_type: road_types[cand.id()].clone(),
                selection: outcome,
                generation: Some(generation),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BenchmarkReport {
        metadata: ReportMetadata {
            config_hash: hash.to_string(),
            config: cfg.snapshot(),
            decisions: DECISIONS.iter().map(|s| s.to_string()).collect(),
            cleaning: traffic.iter().map(|(k, (_, st))| (k.clone(), *st)).collect(),
            excluded,
        },
        tally,
        targets,
    })
}

fn write_outcomes_csv(report: &BenchmarkReport, buf: &mut Vec<u8>) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "target_id",
        "road_type",
        "embedding_selected",
        "similarity_pct",
        "embedding_rmse",
        "geographic_selected",
        "geographic_distance_m",
        "geographic_rmse",
        "best_selected",
        "best_rmse",
        "mean_weekday_flow",
        "verdict",
    ])?;
    for t in &report.targets {
        let o = &t.selection;
        w.write_record([
            o.target_id.clone(),
            t.road_type.clone(),
            o.embedding_selected.clone(),
            o.similarity_pct.map(sig6).unwrap_or_default(),
            sig6(o.embedding_rmse),
            o.geographic_selected.clone(),
            sig6(o.geographic_distance_m),
            sig6(o.geographic_rmse),
            o.best_selected.clone(),
            sig6(o.best_rmse),
            sig6(o.mean_weekday_flow),
            serde_json::to_value(o.verdict)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("selection.csv", e))?;
    Ok(())
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Serialize)]
struct EstimateRecord<'a> {
    config_hash: &'a str,
    target_id: &'a str,
    coord: Coord,
    date: NaiveDate,
    selected_id: &'a str,
    distance: f64,
    similarity_pct: Option<f64>,
    geographic_id: &'a str,
    embedding: &'a RoadEmbedding,
}

/// Sensorless estimation for one location and date: embed, select the
/// most similar sensed segment, generate the day from its history.
pub fn estimate(cfg: &PipelineConfig, target: &TargetSpec, date: NaiveDate, method: MethodChoice) -> Result<Outputs> {
    let hash = cfg.hash();
    let raw = load_osm(cfg)?;
    let sensors = load_sensors(cfg)?;
    let holidays = load_holidays(cfg)?;
    let (traffic, (by_embedding, by_geography, target_embedding)) =
        with_threads(|| Ok((load_traffic(cfg)?, select_for(cfg, &raw, &sensors, target)?)))?;
    let source = series_of(&traffic, &by_embedding.selected_id)?;
    let rows: Vec<(String, String, GeneratedDay)> = synthesize_days(source, &holidays, method, &[date])?
        .into_iter()
        .map(|(m, d)| (target.target_id.clone(), m, d))
        .collect();
    let stem = format!("estimate_{}_{date}", target.target_id);
    let mut out = Outputs::default();
    out.add_csv(
        format!("{stem}.csv"),
        &hash,
        csv_bytes(|b| write_generated_csv(&rows, b))?,
    );
    out.add_json(
        format!("{stem}.json"),
        &EstimateRecord {
            config_hash: &hash,
            target_id: &target.target_id,
            coord: target.coord,
            date,
            selected_id: &by_embedding.selected_id,
            distance: by_embedding.distance,
            similarity_pct: by_embedding.similarity_pct,
            geographic_id: &by_geography.selected_id,
            embedding: &target_embedding,
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensors_parse_and_sort() {
        let s =
            parse_sensors(b"sensor_id,lat,lon,road_type_override,lanes_override\nB,1,2,,\nA,3,4,primary,2\n").unwrap();
        assert_eq!(s[0].sensor_id, "A");
        assert_eq!(s[0].road_type_override, Some(HighwayClass::Primary));
        assert_eq!(s[0].lanes_override, Some(2));
        assert_eq!(s[1].road_type_override, None);
    }

    #[test]
    fn sensors_rejects() {
        let h = "sensor_id,lat,lon,road_type_override,lanes_override\n";
        for body in [
            "A,1,2,,\nA,1,2,,\n",
            "A,91,2,,\n",
            "A,1,2,highway,\n",
            "A,1,2,,0\n",
            "A,x,2,,\n",
            "",
        ] {
            let e = parse_sensors(format!("{h}{body}").as_bytes()).unwrap_err();
            assert!(matches!(e, Error::Format { .. }), "{body}: {e}");
        }
    }

    #[test]
    fn rounding_json() {
        let v = round_json(serde_json::json!({"a": [0.1234567891, 3], "b": f64::MAX}));
        assert_eq!(v.to_string(), r#"{"a":[0.123457,3],"b":1.79769e+308}"#);
    }

    #[test]
    fn hash_line() {
        assert_eq!(embedded_hash(b"# config_hash=abc\na,b\n").as_deref(), Some("abc"));
        assert_eq!(embedded_hash(b"a,b\n"), None);
        assert!(check_hash(Path::new("x"), b"# config_hash=abc\n", "abd").is_err());
    }

    #[test]
    fn commit_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add("a.txt", b"a".to_vec());
        // a directory in the way of the second file makes its rename fail
        fs::create_dir_all(dir.path().join("b.txt/inner")).unwrap();
        out.add("b.txt", b"b".to_vec());
        assert!(out.commit(dir.path()).is_err());
        assert!(!dir.path().join("a.txt").exists());
        assert!(!dir.path().join(".b.txt.tmp").exists());

        let mut ok = Outputs::default();
        ok.add("sub/c.txt", b"c".to_vec());
        let written = ok.commit(dir.path()).unwrap();
        assert_eq!(fs::read(&written[0]).unwrap(), b"c");
    }
}
