//! Pipeline configuration: a JSON file plus `--key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::Coord;
use crate::osm::SpeedTable;
use crate::selection::DistanceMetric;
use crate::traffic::CleaningConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub osm: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub traffic_dir: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    pub output_dir: PathBuf,

    /// Radius of the road graph built around each segment.
    pub radius_m: f64,
    /// Ego-graph depth. Dense networks call for more hops, long segments for fewer.
    pub hops: usize,
    pub interval_min: u32,
    pub spike_factor: f64,
    pub max_gap: usize,
    pub distance: DistanceMetric,
    pub alpha: f64,
    pub snap_threshold_m: f64,
    pub seed: u64,
    /// Center of the graph exported by `ingest`; the sensor centroid when unset.
    pub center_lat: Option<f64>,
    pub center_lon: Option<f64>,
    pub speed_motorway: f64,
    pub speed_primary: f64,
    pub speed_secondary: f64,
    pub speed_tertiary: f64,
    pub speed_residential: f64,
    /// Nemenyi critical value; taken from the shipped table when unset.
    pub nemenyi_q: Option<f64>,

    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let speeds = SpeedTable::default();
        PipelineConfig {
            osm: None,
            sensors: None,
            traffic_dir: None,
            holidays: None,
            output_dir: PathBuf::from("out"),
            radius_m: 2000.0,
            hops: 5,
            interval_min: 15,
            spike_factor: 5.0,
            max_gap: 4,
            distance: DistanceMetric::L2,
            alpha: 0.05,
            snap_threshold_m: 100.0,
            seed: 0,
            center_lat: None,
            center_lon: None,
            speed_motorway: speeds.motorway,
            speed_primary: speeds.primary,
            speed_secondary: speeds.secondary,
            speed_tertiary: speeds.tertiary,
            speed_residential: speeds.residential,
            nemenyi_q: None,
            base_dir: PathBuf::new(),
        }
    }
}

const PATH_KEYS: [&str; 5] = ["osm", "sensors", "traffic_dir", "holidays", "output_dir"];

impl PipelineConfig {
    /// Reads `path` (if any), applies overrides and validates.
    ///
    /// Relative paths in the file resolve against the file's directory;
    /// paths given as overrides resolve against the working directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut value, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let v: serde_json::Value = serde_json::from_str(&text)?;
                if !v.is_object() {
                    return Err(Error::argument("config file must hold a JSON object"));
                }
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (v, dir)
            }
            None => (serde_json::json!({}), PathBuf::new()),
        };
        let mut from_flags = Vec::new();
        for o in overrides {
            let (key, raw) = parse_override(o)?;
            value[key] = raw;
            if PATH_KEYS.contains(&key) {
                from_flags.push(key);
            }
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| Error::argument(format!("config: {e}")))?;
        // flags are relative to the working directory, file entries to the file
        if !from_flags.is_empty() {
            let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
            for key in from_flags {
                let mut slot = cfg.path_slot(key);
                if let Some(p) = slot.as_mut() {
                    if p.is_relative() {
                        *p = cwd.join(&*p);
                    }
                }
            }
        }
        cfg.base_dir = base_dir;
        cfg.validate()?;
        Ok(cfg)
    }

    fn path_slot(&mut self, key: &str) -> PathSlot<'_> {
        match key {
            "osm" => PathSlot::Opt(&mut self.osm),
            "sensors" => PathSlot::Opt(&mut self.sensors),
            "traffic_dir" => PathSlot::Opt(&mut self.traffic_dir),
            "holidays" => PathSlot::Opt(&mut self.holidays),
            _ => PathSlot::Req(&mut self.output_dir),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::argument(msg.to_string()))
            }
        };
        check(
            self.radius_m.is_finite() && self.radius_m > 0.0,
            "radius_m must be positive",
        )?;
        check((1..=50).contains(&self.hops), "hops must be within 1..=50")?;
        check(
            (1..=60).contains(&self.interval_min) && 1440 % self.interval_min == 0,
            "interval_min must divide a day and be at most 60",
        )?;
        check(
            self.spike_factor.is_finite() && self.spike_factor > 1.0,
            "spike_factor must exceed 1",
        )?;
        check(self.max_gap <= 96, "max_gap must be at most 96")?;
        check(self.alpha > 0.0 && self.alpha < 1.0, "alpha must be within (0, 1)")?;
        check(
            self.snap_threshold_m.is_finite() && self.snap_threshold_m > 0.0,
            "snap_threshold_m must be positive",
        )?;
        let speeds = self.speeds();
        check(
            [
                speeds.motorway,
                speeds.primary,
                speeds.secondary,
                speeds.tertiary,
                speeds.residential,
            ]
            .iter()
            .all(|s| s.is_finite() && *s > 0.0),
            "speeds must be positive",
        )?;
        check(
            self.center_lat.is_some() == self.center_lon.is_some(),
            "center_lat and center_lon go together",
        )?;
        if let (Some(lat), Some(lon)) = (self.center_lat, self.center_lon) {
            check(
                (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon),
                "center out of range",
            )?;
        }
        check(
            self.nemenyi_q.is_none_or(|q| q.is_finite() && q > 0.0),
            "nemenyi_q must be positive",
        )?;
        Ok(())
    }

    pub fn speeds(&self) -> SpeedTable {
        SpeedTable {
            motorway: self.speed_motorway,
            primary: self.speed_primary,
            secondary: self.speed_secondary,
            tertiary: self.speed_tertiary,
            residential: self.speed_residential,
        }
    }

    pub fn cleaning(&self) -> CleaningConfig {
        CleaningConfig {
            spike_factor: self.spike_factor,
            max_gap: self.max_gap,
        }
    }

    pub fn center(&self) -> Option<Coord> {
        Some(Coord::new(self.center_lat?, self.center_lon?))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    /// The resolved path for `key`, or an argument error naming the missing key.
    pub fn input(&self, key: &str) -> Result<PathBuf> {
        let p = match key {
            "osm" => &self.osm,
            "sensors" => &self.sensors,
            "traffic_dir" => &self.traffic_dir,
            "holidays" => &self.holidays,
            _ => return Err(Error::argument(format!("unknown input '{key}'"))),
        };
        p.as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::argument(format!("config lacks '{key}'")))
    }

    pub fn holidays_path(&self) -> Option<PathBuf> {
        self.holidays.as_deref().map(|p| self.resolve(p))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Names accepted as config keys and `--key=value` overrides.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(PipelineConfig::default()).expect("config serializes") {
            serde_json::Value::Object(o) => o.keys().cloned().collect(),
            _ => unreachable!("config is an object"),
        }
    }

    /// Every parameter that influences results, without paths.
    pub fn parameters(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("object");
        for k in PATH_KEYS {
            obj.remove(k);
        }
        v
    }

    /// First 16 hex digits of the SHA-256 of the canonical parameter JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.parameters().to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The configuration as written, paths unresolved.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

enum PathSlot<'a> {
    Opt(&'a mut Option<PathBuf>),
    Req(&'a mut PathBuf),
}

impl PathSlot<'_> {
    fn as_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            PathSlot::Opt(p) => p.as_mut(),
            PathSlot::Req(p) => Some(p),
        }
    }
}

/// Splits `--key=value` (leading dashes optional); the value is read as
/// JSON when it parses, as a plain string otherwise.
fn parse_override(s: &str) -> Result<(&str, serde_json::Value)> {
    let body = s.trim_start_matches('-');
    let (key, raw) = body
        .split_once('=')
        .ok_or_else(|| Error::argument(format!("override '{s}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::argument(format!("override '{s}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    Ok((key, value))
}
