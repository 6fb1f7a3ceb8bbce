//! OpenStreetMap XML ingestion.
//!
//! Only the subset needed for drivable road graphs is understood: `node`
//! elements with `id`/`lat`/`lon`, and `way` elements with `nd ref` and
//! `tag k v` children. Everything else (relations, metadata attributes,
//! non-road ways) is skipped.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_m, polyline_length_m, Coord};
use crate::graph::{Edge, NodeId, RoadGraph};

/// Road classes retained from an extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighwayClass {
    Motorway,
    MotorwayLink,
    Primary,
    PrimaryLink,
    Secondary,
    SecondaryLink,
    Tertiary,
    TertiaryLink,
    Residential,
}

impl HighwayClass {
    pub const ALL: [HighwayClass; 9] = [
        HighwayClass::Motorway,
        HighwayClass::MotorwayLink,
        HighwayClass::Primary,
        HighwayClass::PrimaryLink,
        HighwayClass::Secondary,
        HighwayClass::SecondaryLink,
        HighwayClass::Tertiary,
        HighwayClass::TertiaryLink,
        HighwayClass::Residential,
    ];

    /// The non-link class a `*_link` road belongs to.
    pub fn base(self) -> HighwayClass {
        match self {
            HighwayClass::MotorwayLink => HighwayClass::Motorway,
            HighwayClass::PrimaryLink => HighwayClass::Primary,
            HighwayClass::SecondaryLink => HighwayClass::Secondary,
            HighwayClass::TertiaryLink => HighwayClass::Tertiary,
            c => c,
        }
    }

    /// Rank from 0 (residential) to 4 (motorway).
    pub fn rank(self) -> u8 {
        match self.base() {
            HighwayClass::Residential => 0,
            HighwayClass::Tertiary => 1,
            HighwayClass::Secondary => 2,
            HighwayClass::Primary => 3,
            _ => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HighwayClass::Motorway => "motorway",
            HighwayClass::MotorwayLink => "motorway_link",
            HighwayClass::Primary => "primary",
            HighwayClass::PrimaryLink => "primary_link",
            HighwayClass::Secondary => "secondary",
            HighwayClass::SecondaryLink => "secondary_link",
            HighwayClass::Tertiary => "tertiary",
            HighwayClass::TertiaryLink => "tertiary_link",
            HighwayClass::Residential => "residential",
        }
    }
}

impl fmt::Display for HighwayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HighwayClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HighwayClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown highway class '{s}'")))
    }
}

/// Tags kept on retained ways.
const KEPT_TAGS: [&str; 5] = ["highway", "maxspeed", "lanes", "oneway", "name"];

#[derive(Debug, Clone, PartialEq)]
pub struct RawWay {
    pub id: i64,
    pub nodes: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl RawWay {
    pub fn class(&self) -> HighwayClass {
        self.tags["highway"].parse().expect("retained ways carry a known class")
    }
}

/// Nodes and drivable ways of an extract, before graph construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRoadData {
    pub nodes: BTreeMap<i64, Coord>,
    pub ways: Vec<RawWay>,
}

impl RawRoadData {
    pub fn class_counts(&self) -> BTreeMap<HighwayClass, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.ways {
            *counts.entry(w.class()).or_insert(0) += 1;
        }
        counts
    }
}

fn xml_error(reader_pos: u64, message: impl fmt::Display) -> Error {
    Error::Xml {
        offset: reader_pos,
        message: message.to_string(),
    }
}

fn attr(e: &BytesStart<'_>, name: &[u8], pos: u64) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| xml_error(pos, err))?;
        if a.key.as_ref() == name {
            let v = a.unescape_value().map_err(|err| xml_error(pos, err))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn required<T: FromStr>(e: &BytesStart<'_>, name: &str, pos: u64) -> Result<T> {
    let raw = attr(e, name.as_bytes(), pos)?.ok_or_else(|| {
        xml_error(
            pos,
            format!(
                "<{}> missing attribute '{name}'",
                String::from_utf8_lossy(e.name().as_ref())
            ),
        )
    })?;
    raw.parse()
        .map_err(|_| xml_error(pos, format!("invalid value '{raw}' for attribute '{name}'")))
}

struct PendingWay {
    id: i64,
    nodes: Vec<i64>,
    tags: BTreeMap<String, String>,
}

/// Parses an OSM XML extract, keeping every node and the ways whose
/// `highway` tag is a [`HighwayClass`].
pub fn parse_osm_extract(xml: &[u8]) -> Result<RawRoadData> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut out = RawRoadData::default();
    let mut way: Option<PendingWay> = None;
    let mut ways = Vec::new();

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_error(reader.error_position(), e))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                match e.name().as_ref() {
                    b"node" => {
                        let id: i64 = required(e, "id", pos)?;
                        let lat: f64 = required(e, "lat", pos)?;
                        let lon: f64 = required(e, "lon", pos)?;
                        out.nodes.insert(id, Coord::new(lat, lon));
                    }
                    b"way" => {
                        let id: i64 = required(e, "id", pos)?;
                        let pending = PendingWay {
                            id,
                            nodes: Vec::new(),
                            tags: BTreeMap::new(),
                        };
                        if is_empty {
                            ways.push(pending);
                        } else {
                            way = Some(pending);
                        }
                    }
                    b"nd" => {
                        if let Some(w) = way.as_mut() {
                            w.nodes.push(required(e, "ref", pos)?);
                        }
                    }
                    b"tag" => {
                        if let Some(w) = way.as_mut() {
                            let k: String = required(e, "k", pos)?;
                            let v: String = required(e, "v", pos)?;
                            w.tags.insert(k, v);
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) if e.name().as_ref() == b"way" => {
                if let Some(w) = way.take() {
                    ways.push(w);
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    for w in ways {
        let drivable = w.tags.get("highway").is_some_and(|h| h.parse::<HighwayClass>().is_ok());
        if !drivable {
            continue;
        }
        if let Some(&missing) = w.nodes.iter().find(|n| !out.nodes.contains_key(n)) {
            return Err(Error::MissingNode {
                way_id: w.id,
                node_id: missing,
            });
        }
        let tags = w
            .tags
            .into_iter()
            .filter(|(k, _)| KEPT_TAGS.contains(&k.as_str()))
            .collect();
        out.ways.push(RawWay {
            id: w.id,
            nodes: w.nodes,
            tags,
        });
    }
    Ok(out)
}

/// Free-flow speed defaults per base class, in km/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTable {
    pub motorway: f64,
    pub primary: f64,
    pub secondary: f64,
    pub tertiary: f64,
    pub residential: f64,
}

impl Default for SpeedTable {
    fn default() -> Self {
        SpeedTable {
            motorway: 90.0,
            primary: 50.0,
            secondary: 50.0,
            tertiary: 50.0,
            residential: 30.0,
        }
    }
}

impl SpeedTable {
    pub fn default_speed(&self, class: HighwayClass) -> f64 {
        match class.base() {
            HighwayClass::Motorway => self.motorway,
            HighwayClass::Primary => self.primary,
            HighwayClass::Secondary => self.secondary,
            HighwayClass::Tertiary => self.tertiary,
            _ => self.residential,
        }
    }

    /// Speed from a `maxspeed` tag, falling back to the class default.
    pub fn speed_for(&self, class: HighwayClass, maxspeed: Option<&str>) -> f64 {
        maxspeed
            .and_then(parse_maxspeed)
            .unwrap_or_else(|| self.default_speed(class))
    }
}

/// Default free-flow speed of a class under the shipped table.
pub fn default_speed(class: HighwayClass) -> f64 {
    SpeedTable::default().default_speed(class)
}

const KPH_PER_MPH: f64 = 1.609344;

/// First numeric token of a `maxspeed` value in km/h; `mph` values are converted.
pub fn parse_maxspeed(tag: &str) -> Option<f64> {
    let start = tag.find(|c: char| c.is_ascii_digit())?;
    let rest = &tag[start..];
    let end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(rest.len());
    let value: f64 = rest[..end].parse().ok()?;
    if value <= 0.0 {
        return None;
    }
    let first = tag.split(';').next().unwrap_or(tag);
    if first.contains("mph") {
        Some(value * KPH_PER_MPH)
    } else {
        Some(value)
    }
}

/// First integer token of a `lanes` value.
pub fn parse_lanes(tag: &str) -> Option<u32> {
    let digits: String = tag.trim_start().chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok().filter(|&n| n >= 1)
}

enum Direction {
    Both,
    Forward,
    Backward,
}

fn direction(tags: &BTreeMap<String, String>) -> Direction {
    match tags.get("oneway").map(String::as_str) {
        Some("yes" | "true" | "1") => Direction::Forward,
        Some("-1" | "reverse") => Direction::Backward,
        _ => Direction::Both,
    }
}

/// Builds the directed road graph within `radius_m` of `center`.
///
/// Ways are cut at every node used more than once by the retained ways
/// (intersections) and at the ends of every contiguous in-radius run.
pub fn build_graph(raw: &RawRoadData, center: Coord, radius_m: f64, speeds: &SpeedTable) -> Result<RoadGraph> {
    if radius_m.is_nan() || radius_m <= 0.0 {
        return Err(Error::argument("radius_m must be positive"));
    }
    let inside = |id: &i64| haversine_m(center, raw.nodes[id]) <= radius_m;

    // contiguous in-radius runs of each way
    let mut runs: Vec<(&RawWay, Vec<i64>)> = Vec::new();
    for way in &raw.ways {
        let mut current = Vec::new();
        for id in &way.nodes {
            if inside(id) {
                current.push(*id);
            } else if !current.is_empty() {
                runs.push((way, std::mem::take(&mut current)));
            }
        }
        if !current.is_empty() {
            runs.push((way, current));
        }
    }

    let mut uses: HashMap<i64, usize> = HashMap::new();
    for (_, run) in &runs {
        for id in run {
            *uses.entry(*id).or_insert(0) += 1;
        }
    }

    let mut nodes: BTreeMap<NodeId, Coord> = BTreeMap::new();
    let mut edges = Vec::new();
    for (way, run) in &runs {
        if run.len() < 2 {
            continue;
        }
        let class = way.class();
        let speed = speeds.speed_for(class, way.tags.get("maxspeed").map(String::as_str));
        let lanes = way.tags.get("lanes").and_then(|l| parse_lanes(l));
        let dir = direction(&way.tags);

        let mut piece_start = 0;
        for i in 1..run.len() {
            let is_cut = i == run.len() - 1 || uses[&run[i]] >= 2;
            if !is_cut {
                continue;
            }
            let geometry: Vec<Coord> = run[piece_start..=i].iter().map(|id| raw.nodes[id]).collect();
            let length_m = polyline_length_m(&geometry);
            let (src, dst) = (run[piece_start], run[i]);
            piece_start = i;
            if length_m <= 0.0 {
                continue;
            }
            nodes.insert(src, raw.nodes[&src]);
            nodes.insert(dst, raw.nodes[&dst]);
            let forward = Edge::new(src, dst, length_m, speed, class, lanes, Some(way.id), geometry);
            match dir {
                Direction::Forward => edges.push(forward),
                Direction::Backward => edges.push(forward.reversed()),
                Direction::Both => {
                    let back = forward.reversed();
                    edges.push(forward);
                    edges.push(back);
                }
            }
        }
    }

    if edges.is_empty() {
        return Err(Error::domain("no drivable roads in radius"));
    }
    Ok(RoadGraph::new(nodes, edges))
}
