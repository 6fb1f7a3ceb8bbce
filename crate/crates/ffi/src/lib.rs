//! C ABI for the roadtwin library.
//!
//! Every function returns an [`RtStatus`]; results come back through out
//! pointers. On failure a message is kept per thread and can be read with
//! [`rt_last_error_message`]. Graphs and traffic series are opaque handles
//! released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use roadtwin::calendar::{DayFilter, HolidayCalendar};
use roadtwin::embedding::{build_embedding, normalize_pool, Overrides, RoadEmbedding, FEATURES};
use roadtwin::evaluation::{critical_difference, friedman_test, nemenyi_q, nrmse, rmse};
use roadtwin::geo::Coord;
use roadtwin::graph::{ego_graph, insert_central_node, shortest_travel_time, RoadGraph};
use roadtwin::osm::{build_graph, parse_osm_extract, HighwayClass, SpeedTable};
use roadtwin::selection::DistanceMetric;
use roadtwin::traffic::{clean_series, daily_profile, load_series, CleaningConfig, TrafficSeries};
use roadtwin::{Error, ErrorKind};

/// Number of features in a road embedding.
pub const RT_FEATURES: usize = 7;

const _: () = assert!(RT_FEATURES == FEATURES);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtStatus {
    Ok = 0,
    /// Malformed input: bad XML or CSV, invalid arguments.
    InputError = 2,
    /// Valid input outside the model's domain: no roads, no data for a date.
    DomainError = 3,
    /// An internal invariant failed.
    InvariantError = 4,
    /// A required pointer was null.
    NullPointer = 5,
    /// A caller buffer is too small; the required length was written back.
    BufferTooSmall = 6,
    /// The library panicked; the handle involved should be discarded.
    Panic = 7,
}

/// Road graph handle.
pub struct RtGraph {
    graph: RoadGraph,
}

/// Traffic series handle (one sensor).
pub struct RtSeries {
    series: TrafficSeries,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Buffer { needed: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> RtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RtStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.kind() {
                ErrorKind::Input => RtStatus::InputError,
                ErrorKind::Domain => RtStatus::DomainError,
                ErrorKind::Invariant => RtStatus::InvariantError,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            RtStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed })) => {
            set_error(format!("buffer too small, {needed} elements needed"));
            RtStatus::BufferTooSmall
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RtStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable elements.
unsafe fn input_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn opt_str<'a>(p: *const c_char) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| Failure::Lib(Error::Argument("string is not UTF-8".into())))
}

/// # Safety
/// `out` must be null or valid for one write.
unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> FfiResult {
    non_null(out, what)?;
    out.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rt_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---------------------------------------------------------------- graph

/// Parses an OSM XML extract and builds the drivable graph within
/// `radius_m` of the center, with the default speed table.
///
/// # Safety
/// `xml` must point to `len` readable bytes; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_graph_from_osm(
    xml: *const u8,
    len: usize,
    center_lat: f64,
    center_lon: f64,
    radius_m: f64,
    out: *mut *mut RtGraph,
) -> RtStatus {
    guard(|| {
        non_null(out, "out")?;
        let bytes = input_slice(xml, len, "xml")?;
        let raw = parse_osm_extract(bytes)?;
        let graph = build_graph(
            &raw,
            Coord::new(center_lat, center_lon),
            radius_m,
            &SpeedTable::default(),
        )?;
        out.write(Box::into_raw(Box::new(RtGraph { graph })));
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle from [`rt_graph_from_osm`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_graph_free(graph: *mut RtGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; outputs must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_graph_counts(graph: *const RtGraph, nodes: *mut usize, edges: *mut usize) -> RtStatus {
    guard(|| {
        non_null(graph, "graph")?;
        let g = &(*graph).graph;
        write(nodes, g.node_count(), "nodes")?;
        write(edges, g.edge_count(), "edges")
    })
}

/// Shortest travel time in seconds between two OSM node ids.
/// `reachable` is false (and `seconds` infinite) when no path exists.
///
/// # Safety
/// `graph` must be a live handle; outputs must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_shortest_travel_time(
    graph: *const RtGraph,
    src: i64,
    dst: i64,
    seconds: *mut f64,
    reachable: *mut bool,
) -> RtStatus {
    guard(|| {
        non_null(graph, "graph")?;
        let t = shortest_travel_time(&(*graph).graph, src, dst)?;
        write(seconds, t.unwrap_or(f64::INFINITY), "seconds")?;
        write(reachable, t.is_some(), "reachable")
    })
}

/// Raw road embedding of a location on the graph: `out` receives
/// [`RT_FEATURES`] values. `road_type` (e.g. "primary") may be null and
/// `lanes` 0 to keep the graph's attributes.
///
/// # Safety
/// `graph` must be a live handle, `road_type` null or a C string, and
/// `out` must point to [`RT_FEATURES`] writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_graph_embedding(
    graph: *const RtGraph,
    lat: f64,
    lon: f64,
    hops: usize,
    snap_threshold_m: f64,
    road_type: *const c_char,
    lanes: u32,
    out: *mut f64,
) -> RtStatus {
    guard(|| {
        non_null(graph, "graph")?;
        non_null(out, "out")?;
        let road_type = match opt_str(road_type)? {
            Some(s) => Some(s.parse::<HighwayClass>()?),
            None => None,
        };
        let g = &(*graph).graph;
        let (g, center) = insert_central_node(g, "target", Coord::new(lat, lon), snap_threshold_m)?;
        let ego = ego_graph(&g, &center, hops)?;
        let overrides = Overrides {
            road_type,
            lanes: (lanes > 0).then_some(lanes),
        };
        let e = build_embedding(&g, &ego, &center, overrides)?;
        slice::from_raw_parts_mut(out, FEATURES).copy_from_slice(&e.raw);
        Ok(())
    })
}

/// Min-max normalizes `n` raw embeddings (row-major, `n x RT_FEATURES`)
/// across the pool into `out` (same shape).
///
/// # Safety
/// `raw` and `out` must each point to `n * RT_FEATURES` doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_normalize_pool(raw: *const f64, n: usize, out: *mut f64) -> RtStatus {
    guard(|| {
        let values = input_slice(raw, n * FEATURES, "raw")?;
        non_null(out, "out")?;
        let pool: Vec<RoadEmbedding> = values
            .chunks_exact(FEATURES)
            .enumerate()
            .map(|(i, c)| RoadEmbedding::from_raw(i.to_string(), c.try_into().expect("chunk of FEATURES")))
            .collect();
        let normalized = normalize_pool(&pool)?;
        let dst = slice::from_raw_parts_mut(out, n * FEATURES);
        for (row, e) in dst.chunks_exact_mut(FEATURES).zip(&normalized) {
            row.copy_from_slice(e.normalized.as_ref().expect("normalized"));
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- selection

/// Distance between two `dims`-vectors; `metric` 0 = Euclidean, 1 = L1.
///
/// # Safety
/// `u` and `v` must point to `dims` doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_embedding_distance(
    u: *const f64,
    v: *const f64,
    dims: usize,
    metric: u32,
    out: *mut f64,
) -> RtStatus {
    guard(|| {
        let metric = metric_of(metric)?;
        let d = metric.distance(input_slice(u, dims, "u")?, input_slice(v, dims, "v")?)?;
        write(out, d, "out")
    })
}

fn metric_of(code: u32) -> Result<DistanceMetric, Failure> {
    match code {
        0 => Ok(DistanceMetric::L2),
        1 => Ok(DistanceMetric::L1),
        _ => Err(Error::Argument(format!("unknown metric {code}")).into()),
    }
}

/// `100 * (1 - d / max)`, with `max` the largest distance in the unit cube.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_similarity_percent(d: f64, dims: usize, metric: u32, out: *mut f64) -> RtStatus {
    guard(|| {
        let s = metric_of(metric)?.similarity_percent(d, dims)?;
        write(out, s, "out")
    })
}

// ---------------------------------------------------------------- evaluation

/// # Safety
/// `y` and `yhat` must point to `len` doubles; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_rmse(y: *const f64, yhat: *const f64, len: usize, out: *mut f64) -> RtStatus {
    guard(|| {
        let r = rmse(input_slice(y, len, "y")?, input_slice(yhat, len, "yhat")?)?;
        write(out, r, "out")
    })
}

/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_nrmse(rmse_value: f64, mean_flow: f64, out: *mut f64) -> RtStatus {
    guard(|| write(out, nrmse(rmse_value, mean_flow)?, "out"))
}

/// Friedman test on a row-major `blocks x methods` error matrix.
/// `mean_ranks` may be null, else it receives `methods` values.
///
/// # Safety
/// `errors` must point to `blocks * methods` doubles; `statistic` and
/// `p_value` valid for one write; `mean_ranks` null or `methods` doubles.
#[no_mangle]
pub unsafe extern "C" fn rt_friedman(
    errors: *const f64,
    blocks: usize,
    methods: usize,
    statistic: *mut f64,
    p_value: *mut f64,
    mean_ranks: *mut f64,
) -> RtStatus {
    guard(|| {
        let cells = input_slice(errors, blocks * methods, "errors")?;
        if methods == 0 {
            return Err(Error::Argument("methods must be positive".into()).into());
        }
        let matrix: Vec<Vec<f64>> = cells.chunks_exact(methods).map(<[f64]>::to_vec).collect();
        let f = friedman_test(&matrix)?;
        write(statistic, f.statistic, "statistic")?;
        write(p_value, f.p_value, "p_value")?;
        if !mean_ranks.is_null() {
            slice::from_raw_parts_mut(mean_ranks, methods).copy_from_slice(&f.mean_ranks);
        }
        Ok(())
    })
}

/// Nemenyi critical difference `q * sqrt(k (k + 1) / (6 n))`.
/// A non-positive `q` takes the shipped value for `k` at `alpha`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_nemenyi_cd(q: f64, k: usize, n: usize, alpha: f64, out: *mut f64) -> RtStatus {
    guard(|| {
        if k < 2 || n == 0 {
            return Err(Error::Argument(format!("need k >= 2 and n >= 1, got k={k}, n={n}")).into());
        }
        let q = if q > 0.0 {
            q
        } else {
            nemenyi_q(k, alpha)
                .ok_or_else(|| Error::Argument(format!("no shipped critical value for k={k}, alpha={alpha}")))?
        };
        write(out, critical_difference(q, k, n), "out")
    })
}

// ---------------------------------------------------------------- traffic

/// Loads one sensor's `sensor_id,timestamp,flow` CSV and cleans it.
/// A non-positive `spike_factor` skips cleaning.
///
/// # Safety
/// `csv` must point to `len` bytes; `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_series_from_csv(
    csv: *const u8,
    len: usize,
    interval_min: u32,
    spike_factor: f64,
    max_gap: usize,
    out: *mut *mut RtSeries,
) -> RtStatus {
    guard(|| {
        non_null(out, "out")?;
        let mut series = load_series(input_slice(csv, len, "csv")?, interval_min)?;
        if spike_factor > 0.0 {
            series = clean_series(&series, &CleaningConfig { spike_factor, max_gap }).0;
        }
        out.write(Box::into_raw(Box::new(RtSeries { series })));
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle from [`rt_series_from_csv`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rt_series_free(series: *mut RtSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// # Safety
/// `series` must be a live handle; outputs valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_series_shape(
    series: *const RtSeries,
    days: *mut usize,
    slots_per_day: *mut usize,
) -> RtStatus {
    guard(|| {
        non_null(series, "series")?;
        let s = &(*series).series;
        write(days, s.day_count(), "days")?;
        write(slots_per_day, s.slots_per_day(), "slots_per_day")
    })
}

/// Slotwise median profile. `filter` 0 = weekdays, 1 = weekends and
/// holidays, 2 = all days. `holidays` is an optional newline-separated
/// list of ISO dates. `values` needs room for one value per slot; on
/// [`RtStatus::BufferTooSmall`] the slot count is written to `len`.
///
/// # Safety
/// `series` must be a live handle, `holidays` null or a C string,
/// `values` null or `cap` writable doubles, `len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn rt_series_profile(
    series: *const RtSeries,
    filter: u32,
    holidays: *const c_char,
    values: *mut f64,
    cap: usize,
    len: *mut usize,
) -> RtStatus {
    guard(|| {
        non_null(series, "series")?;
        non_null(len, "len")?;
        let filter = match filter {
            0 => DayFilter::Weekdays,
            1 => DayFilter::Weekends,
            2 => DayFilter::All,
            _ => return Err(Error::Argument(format!("unknown day filter {filter}")).into()),
        };
        let cal = match opt_str(holidays)? {
            Some(text) => HolidayCalendar::parse(text)?,
            None => HolidayCalendar::default(),
        };
        let p = daily_profile(&(*series).series, filter, &cal)?;
        len.write(p.values.len());
        if values.is_null() || cap < p.values.len() {
            return Err(Failure::Buffer { needed: p.values.len() });
        }
        slice::from_raw_parts_mut(values, p.values.len()).copy_from_slice(&p.values);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_are_contained() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RtStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let n = unsafe { rt_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(n, msg.len());
    }

    #[test]
    fn truncated_message() {
        set_error("abcdef".into());
        let mut buf = [1 as c_char; 4];
        let n = unsafe { rt_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }
}
