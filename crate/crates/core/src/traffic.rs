//! Per-sensor traffic flow series: loading, cleaning and daily profiles.
//!
//! A [`TrafficSeries`] always spans whole calendar days on a fixed grid of
//! `interval_min` minutes. Slots with no recording are kept as
//! [`Quality::Missing`]; a day is *complete* when none of its slots is
//! missing, and only complete days feed profiles and generators.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::calendar::{DayFilter, HolidayCalendar};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::stats::{median, sample_std};

pub const DEFAULT_INTERVAL_MIN: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Observed,
    Interpolated,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub timestamp: NaiveDateTime,
    /// Vehicles per interval; 0 for missing slots.
    pub flow: f64,
    pub quality: Quality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSeries {
    pub sensor_id: String,
    pub interval_min: u32,
    start: NaiveDate,
    records: Vec<Record>,
}

impl TrafficSeries {
    /// Builds a series from whole days of flows, all observed.
    pub fn from_days(
        sensor_id: impl Into<String>,
        interval_min: u32,
        start: NaiveDate,
        days: &[Vec<f64>],
    ) -> Result<Self> {
        let t = slots_per_day(interval_min)?;
        let mut records = Vec::with_capacity(days.len() * t);
        for (d, day) in days.iter().enumerate() {
            if day.len() != t {
                return Err(Error::argument(format!(
                    "day {d} has {} slots, expected {t}",
                    day.len()
                )));
            }
            let date = start + Duration::days(d as i64);
            for (s, &flow) in day.iter().enumerate() {
                records.push(Record {
                    timestamp: slot_time(date, s, interval_min),
                    flow,
                    quality: Quality::Observed,
                });
            }
        }
        Ok(TrafficSeries {
            sensor_id: sensor_id.into(),
            interval_min,
            start,
            records,
        })
    }

    pub fn slots_per_day(&self) -> usize {
        (1440 / self.interval_min) as usize
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn day_count(&self) -> usize {
        self.records.len() / self.slots_per_day()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.start
    }

    pub fn last_date(&self) -> NaiveDate {
        self.start + Duration::days(self.day_count() as i64 - 1)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.day_count()).map(|d| self.start + Duration::days(d as i64))
    }

    pub fn day(&self, date: NaiveDate) -> Option<&[Record]> {
        let offset = (date - self.start).num_days();
        if offset < 0 || offset as usize >= self.day_count() {
            return None;
        }
        let t = self.slots_per_day();
        let i = offset as usize * t;
        Some(&self.records[i..i + t])
    }

    pub fn missing_in_day(&self, date: NaiveDate) -> Option<usize> {
        self.day(date)
            .map(|recs| recs.iter().filter(|r| r.quality == Quality::Missing).count())
    }

    pub fn is_complete(&self, date: NaiveDate) -> bool {
        self.missing_in_day(date) == Some(0)
    }

    /// Flows of every complete day, in date order.
    pub fn complete_days(&self) -> impl Iterator<Item = (NaiveDate, Vec<f64>)> + '_ {
        self.dates().filter_map(move |d| {
            let recs = self.day(d)?;
            recs.iter()
                .all(|r| r.quality != Quality::Missing)
                .then(|| (d, recs.iter().map(|r| r.flow).collect()))
        })
    }
}

fn slots_per_day(interval_min: u32) -> Result<usize> {
    if interval_min == 0 || 1440 % interval_min != 0 {
        return Err(Error::argument(format!(
            "interval of {interval_min} min does not divide a day"
        )));
    }
    Ok((1440 / interval_min) as usize)
}

fn slot_time(date: NaiveDate, slot: usize, interval_min: u32) -> NaiveDateTime {
    date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(slot as i64 * i64::from(interval_min))
}

/// `HH:MM` for a slot index.
pub fn time_of_day(slot: usize, interval_min: u32) -> String {
    let minutes = slot as u32 * interval_min;
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| chrono::DateTime::parse_from_rfc3339(s).ok().map(|t| t.naive_local()))
}

/// Last Sunday of October, when the EU clock falls back and 02:00-02:59 repeats.
fn is_fall_back_hour(ts: NaiveDateTime) -> bool {
    let d = ts.date();
    d.month() == 10 && d.weekday() == Weekday::Sun && d.day() + 7 > 31 && ts.hour() == 2
}

struct Row {
    line: usize,
    timestamp: NaiveDateTime,
    flow: f64,
}

fn read_rows(csv_bytes: &[u8]) -> Result<BTreeMap<String, Vec<Row>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            row: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let (c_sensor, c_ts, c_flow) = (col("sensor_id")?, col("timestamp")?, col("flow")?);

    let mut by_sensor: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let timestamp = parse_timestamp(field(c_ts)).ok_or_else(|| Error::Format {
            row: line,
            message: format!("invalid timestamp '{}'", field(c_ts)),
        })?;
        let flow: f64 = field(c_flow).parse().map_err(|_| Error::Format {
            row: line,
            message: format!("invalid flow '{}'", field(c_flow)),
        })?;
        if !flow.is_finite() || flow < 0.0 {
            return Err(Error::Format {
                row: line,
                message: format!("flow must be a non-negative number, got {flow}"),
            });
        }
        by_sensor
            .entry(field(c_sensor).to_string())
            .or_default()
            .push(Row { line, timestamp, flow });
    }
    Ok(by_sensor)
}

fn assemble(sensor_id: String, mut rows: Vec<Row>, interval_min: u32) -> Result<TrafficSeries> {
    let t = slots_per_day(interval_min)?;
    for r in &rows {
        let on_grid = r.timestamp.second() == 0
            && r.timestamp.nanosecond() == 0
            && (r.timestamp.hour() * 60 + r.timestamp.minute()) % interval_min == 0;
        if !on_grid {
            return Err(Error::Format {
                row: r.line,
                message: format!("timestamp {} is off the {interval_min}-minute grid", r.timestamp),
            });
        }
    }
    rows.sort_by_key(|r| (r.timestamp, r.line));
    let start = rows.first().map(|r| r.timestamp.date()).ok_or_else(|| Error::Format {
        row: 1,
        message: "no traffic rows".into(),
    })?;
    let end = rows.last().expect("non-empty").timestamp.date();
    let days = (end - start).num_days() as usize + 1;

    let mut records: Vec<Record> = (0..days * t)
        .map(|i| Record {
            timestamp: slot_time(start + Duration::days((i / t) as i64), i % t, interval_min),
            flow: 0.0,
            quality: Quality::Missing,
        })
        .collect();
    let mut prev: Option<NaiveDateTime> = None;
    for r in rows {
        if prev == Some(r.timestamp) {
            if is_fall_back_hour(r.timestamp) {
                continue;
            }
            return Err(Error::Format {
                row: r.line,
                message: format!("duplicate timestamp {}", r.timestamp),
            });
        }
        prev = Some(r.timestamp);
        let day = (r.timestamp.date() - start).num_days() as usize;
        let slot = ((r.timestamp.hour() * 60 + r.timestamp.minute()) / interval_min) as usize;
        let rec = &mut records[day * t + slot];
        rec.flow = r.flow;
        rec.quality = Quality::Observed;
    }
    Ok(TrafficSeries {
        sensor_id,
        interval_min,
        start,
        records,
    })
}

/// Loads one sensor's series from `sensor_id,timestamp,flow` CSV.
pub fn load_series(csv_bytes: &[u8], interval_min: u32) -> Result<TrafficSeries> {
    let mut by_sensor = read_rows(csv_bytes)?;
    if by_sensor.len() > 1 {
        let ids: Vec<&str> = by_sensor.keys().map(String::as_str).collect();
        return Err(Error::Format {
            row: 1,
            message: format!("expected one sensor, found {}", ids.join(", ")),
        });
    }
    let (id, rows) = by_sensor.pop_first().ok_or_else(|| Error::Format {
        row: 1,
        message: "no traffic rows".into(),
    })?;
    assemble(id, rows, interval_min)
}

/// Loads a combined CSV holding several sensors.
pub fn load_series_by_sensor(csv_bytes: &[u8], interval_min: u32) -> Result<BTreeMap<String, TrafficSeries>> {
    read_rows(csv_bytes)?
        .into_iter()
        .map(|(id, rows)| Ok((id.clone(), assemble(id, rows, interval_min)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    /// Observed values above this multiple of their slot median are spikes.
    pub spike_factor: f64,
    /// Longest run of missing slots that is interpolated.
    pub max_gap: usize,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            spike_factor: 5.0,
            max_gap: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningStats {
    pub spikes_removed: usize,
    pub slots_interpolated: usize,
    pub slots_missing: usize,
    pub incomplete_days: usize,
}

/// Removes spikes, fills short gaps and reports what remains missing.
///
/// Spike removal repeats until no observed value exceeds `spike_factor`
/// times the median of the observed values in its slot (slots with a zero
/// median are never flagged). Missing runs of at most `max_gap` slots with
/// data on both sides are then linearly interpolated. Cleaning a cleaned
/// series changes nothing.
pub fn clean_series(series: &TrafficSeries, cfg: &CleaningConfig) -> (TrafficSeries, CleaningStats) {
    let mut out = series.clone();
    let t = out.slots_per_day();
    let days = out.day_count();
    let mut stats = CleaningStats::default();

    loop {
        let medians: Vec<Option<f64>> = (0..t)
            .map(|s| {
                let vals: Vec<f64> = (0..days)
                    .map(|d| out.records[d * t + s])
                    .filter(|r| r.quality == Quality::Observed)
                    .map(|r| r.flow)
                    .collect();
                median(&vals)
            })
            .collect();
        let mut removed = 0;
        for (i, r) in out.records.iter_mut().enumerate() {
            if r.quality != Quality::Observed {
                continue;
            }
            if let Some(m) = medians[i % t] {
                if m > 0.0 && r.flow > cfg.spike_factor * m {
                    r.quality = Quality::Missing;
                    r.flow = 0.0;
                    removed += 1;
                }
            }
        }
        stats.spikes_removed += removed;
        if removed == 0 {
            break;
        }
    }

    let n = out.records.len();
    let mut i = 0;
    while i < n {
        if out.records[i].quality != Quality::Missing {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && out.records[i].quality == Quality::Missing {
            i += 1;
        }
        let run_len = i - run_start;
        if run_start == 0 || i == n || run_len > cfg.max_gap {
            continue;
        }
        let left = out.records[run_start - 1].flow;
        let right = out.records[i].flow;
        for k in 0..run_len {
            let w = (k + 1) as f64 / (run_len + 1) as f64;
            let r = &mut out.records[run_start + k];
            r.flow = left + (right - left) * w;
            r.quality = Quality::Interpolated;
        }
        stats.slots_interpolated += run_len;
    }

    stats.slots_missing = out.records.iter().filter(|r| r.quality == Quality::Missing).count();
    stats.incomplete_days = out.dates().filter(|&d| !out.is_complete(d)).count();
    (out, stats)
}

/// Per time-of-day median flow over qualifying days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub sensor_id: String,
    pub interval_min: u32,
    pub values: Vec<f64>,
    pub stdev: Vec<f64>,
    pub day_filter: DayFilter,
    pub day_count: usize,
}

/// Slotwise median (and sample standard deviation) over the complete days
/// accepted by `filter`.
pub fn daily_profile(series: &TrafficSeries, filter: DayFilter, holidays: &HolidayCalendar) -> Result<TrafficProfile> {
    let days: Vec<Vec<f64>> = series
        .complete_days()
        .filter(|(d, _)| filter.accepts(*d, holidays))
        .map(|(_, flows)| flows)
        .collect();
    if days.is_empty() {
        return Err(Error::domain(format!(
            "sensor {} has no complete {} days",
            series.sensor_id,
            filter.as_str()
        )));
    }
    let t = series.slots_per_day();
    let mut values = Vec::with_capacity(t);
    let mut stdev = Vec::with_capacity(t);
    let mut column = Vec::with_capacity(days.len());
    for s in 0..t {
        column.clear();
        column.extend(days.iter().map(|d| d[s]));
        values.push(median(&column).expect("non-empty"));
        stdev.push(sample_std(&column));
    }
    Ok(TrafficProfile {
        sensor_id: series.sensor_id.clone(),
        interval_min: series.interval_min,
        values,
        stdev,
        day_filter: filter,
        day_count: days.len(),
    })
}

/// The flows of one calendar day; fails unless the day is complete.
pub fn slice_day(series: &TrafficSeries, date: NaiveDate) -> Result<Vec<f64>> {
    let recs = series.day(date).ok_or_else(|| Error::Unavailable {
        date,
        reason: format!(
            "outside the series span {}..{} of sensor {}",
            series.first_date(),
            series.last_date(),
            series.sensor_id
        ),
    })?;
    let missing = recs.iter().filter(|r| r.quality == Quality::Missing).count();
    if missing > 0 {
        return Err(Error::Unavailable {
            date,
            reason: format!("sensor {} is missing {missing} slots", series.sensor_id),
        });
    }
    Ok(recs.iter().map(|r| r.flow).collect())
}

/// Mean flow over every slot of the complete working weekdays.
pub fn mean_weekday_flow(series: &TrafficSeries, holidays: &HolidayCalendar) -> Result<f64> {
    let (sum, count) = series
        .complete_days()
        .filter(|(d, _)| holidays.is_working_weekday(*d))
        .fold((0.0, 0usize), |(s, n), (_, flows)| {
            (s + flows.iter().sum::<f64>(), n + flows.len())
        });
    if count == 0 {
        return Err(Error::domain(format!(
            "sensor {} has no complete weekdays",
            series.sensor_id
        )));
    }
    Ok(sum / count as f64)
}

/// Writes `slot_index,time_of_day,median_flow,stdev`.
pub fn write_profile_csv<W: Write>(profile: &TrafficProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot_index", "time_of_day", "median_flow", "stdev"])?;
    for (s, (v, sd)) in profile.values.iter().zip(&profile.stdev).enumerate() {
        w.write_record([s.to_string(), time_of_day(s, profile.interval_min), sig6(*v), sig6(*sd)])?;
    }
    w.flush().map_err(|e| Error::io("profile.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn csv_day(date: &str, skip: &[usize], value: impl Fn(usize) -> f64) -> String {
        let mut s = String::from("sensor_id,timestamp,flow\n");
        for slot in 0..96 {
            if skip.contains(&slot) {
                continue;
            }
            s += &format!("A,{}T{},{}\n", date, time_of_day(slot, 15) + ":00", value(slot));
        }
        s
    }

    fn constant_days(n: usize, c: f64) -> TrafficSeries {
        TrafficSeries::from_days("A", 15, d("2019-01-07"), &vec![vec![c; 96]; n]).unwrap()
    }

    #[test]
    fn full_day_loads_observed() {
        let s = load_series(csv_day("2019-01-07", &[], |_| 10.0).as_bytes(), 15).unwrap();
        assert_eq!(s.records().len(), 96);
        assert!(s.records().iter().all(|r| r.quality == Quality::Observed));
        assert_eq!(s.sensor_id, "A");
    }

    #[test]
    fn absent_slot_is_missing() {
        let s = load_series(csv_day("2019-01-07", &[40], |_| 10.0).as_bytes(), 15).unwrap();
        assert_eq!(s.records()[40].quality, Quality::Missing);
        assert_eq!(s.missing_in_day(d("2019-01-07")), Some(1));
    }

    #[test]
    fn off_grid_timestamp_names_row() {
        let text = "sensor_id,timestamp,flow\nA,2019-01-07T00:00:00,1\nA,2019-01-07T00:07:00,1\n";
        match load_series(text.as_bytes(), 15) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_rejected_except_fall_back_hour() {
        let dup = "sensor_id,timestamp,flow\nA,2019-01-07T00:00:00,1\nA,2019-01-07T00:00:00,2\n";
        assert!(matches!(
            load_series(dup.as_bytes(), 15),
            Err(Error::Format { row: 3, .. })
        ));
        let fall_back = "sensor_id,timestamp,flow\nA,2019-10-27T02:00:00,1\nA,2019-10-27T02:00:00,2\n";
        let s = load_series(fall_back.as_bytes(), 15).unwrap();
        assert_eq!(s.day(d("2019-10-27")).unwrap()[8].flow, 1.0);
    }

    #[test]
    fn mixed_sensors_need_the_combined_loader() {
        let text = "sensor_id,timestamp,flow\nA,2019-01-07T00:00:00,1\nB,2019-01-07T00:00:00,2\n";
        assert!(load_series(text.as_bytes(), 15).is_err());
        let all = load_series_by_sensor(text.as_bytes(), 15).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all["B"].records()[0].flow, 2.0);
    }

    #[test]
    fn spike_is_replaced_by_interpolation() {
        let mut days = vec![vec![10.0; 96]; 5];
        days[2][30] = 100.0;
        days[2][29] = 8.0;
        days[2][31] = 12.0;
        let s = TrafficSeries::from_days("A", 15, d("2019-01-07"), &days).unwrap();
        let (c, stats) = clean_series(&s, &CleaningConfig::default());
        let r = c.day(d("2019-01-09")).unwrap()[30];
        assert_eq!(r.quality, Quality::Interpolated);
        assert_eq!(r.flow, 10.0);
        assert_eq!(stats.spikes_removed, 1);
        assert_eq!(stats.slots_interpolated, 1);
    }

    #[test]
    fn long_gap_leaves_day_incomplete() {
        let s = load_series(csv_day("2019-01-07", &[20, 21, 22, 23, 24, 25], |_| 5.0).as_bytes(), 15).unwrap();
        let (c, stats) = clean_series(&s, &CleaningConfig::default());
        assert!(!c.is_complete(d("2019-01-07")));
        assert_eq!(stats.incomplete_days, 1);
        assert_eq!(stats.slots_missing, 6);
        assert!(slice_day(&c, d("2019-01-07")).is_err());

        let short = load_series(csv_day("2019-01-07", &[20, 21, 22, 23], |_| 5.0).as_bytes(), 15).unwrap();
        let (c, _) = clean_series(&short, &CleaningConfig::default());
        assert!(c.is_complete(d("2019-01-07")));
    }

    #[test]
    fn clean_input_is_a_fixed_point() {
        let s = load_series(csv_day("2019-01-07", &[], |i| (i % 7) as f64 + 3.0).as_bytes(), 15).unwrap();
        let (c, stats) = clean_series(&s, &CleaningConfig::default());
        assert_eq!(c, s);
        assert_eq!(stats, CleaningStats::default());
    }

    #[test]
    fn constant_profile() {
        let p = daily_profile(
            &constant_days(10, 7.0),
            DayFilter::Weekdays,
            &HolidayCalendar::default(),
        )
        .unwrap();
        assert!(p.values.iter().all(|&v| v == 7.0));
        assert!(p.stdev.iter().all(|&v| v == 0.0));
        assert_eq!(p.values.len(), 96);
        assert_eq!(p.day_count, 8);
    }

    #[test]
    fn weekday_median() {
        // Mon-Wed carry 1, 2, 9 at every slot
        let days: Vec<Vec<f64>> = [1.0, 2.0, 9.0].iter().map(|&v| vec![v; 96]).collect();
        let s = TrafficSeries::from_days("A", 15, d("2019-01-07"), &days).unwrap();
        let p = daily_profile(&s, DayFilter::Weekdays, &HolidayCalendar::default()).unwrap();
        assert_eq!(p.values[0], 2.0);
    }

    #[test]
    fn no_qualifying_days() {
        // Saturday and Sunday only
        let s = TrafficSeries::from_days("A", 15, d("2019-01-05"), &vec![vec![1.0; 96]; 2]).unwrap();
        assert!(matches!(
            daily_profile(&s, DayFilter::Weekdays, &HolidayCalendar::default()),
            Err(Error::Domain(_))
        ));
        assert!(mean_weekday_flow(&s, &HolidayCalendar::default()).is_err());
        assert!(daily_profile(&s, DayFilter::Weekends, &HolidayCalendar::default()).is_ok());
    }

    #[test]
    fn slicing() {
        let s = constant_days(2, 3.0);
        assert_eq!(slice_day(&s, d("2019-01-07")).unwrap().len(), 96);
        assert!(matches!(slice_day(&s, d("2019-03-01")), Err(Error::Unavailable { .. })));
    }

    #[test]
    fn weekday_mean() {
        assert_eq!(
            mean_weekday_flow(&constant_days(7, 4.0), &HolidayCalendar::default()).unwrap(),
            4.0
        );
        let mut day = vec![10.0; 96];
        day[48..].fill(30.0);
        let s = TrafficSeries::from_days("A", 15, d("2019-01-07"), &[day]).unwrap();
        assert_eq!(mean_weekday_flow(&s, &HolidayCalendar::default()).unwrap(), 20.0);
    }

    #[test]
    fn holidays_leave_weekday_profile() {
        let mut days = vec![vec![5.0; 96]; 5];
        days[0] = vec![500.0; 96];
        let s = TrafficSeries::from_days("A", 15, d("2019-01-07"), &days).unwrap();
        let cal = HolidayCalendar::new([d("2019-01-07")]);
        let p = daily_profile(&s, DayFilter::Weekdays, &cal).unwrap();
        assert_eq!(p.day_count, 4);
        assert!(p.values.iter().all(|&v| v == 5.0));
    }
}
