//! Daily traffic synthesis for a target from a single sensed source.
//!
//! Two generators share the [`Generator`] contract:
//!
//! - [`ClusterModel`] groups the source's complete days into 14 calendar
//!   classes (weekday x holiday flag) and answers with the class's
//!   representative traffic pattern (slotwise median).
//! - [`NseGenerator`] copies the source's real flows for the requested date.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::calendar::HolidayCalendar;
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::stats::median;
use crate::traffic::{slice_day, TrafficSeries};

pub const DAY_CLASSES: usize = 14;

/// Calendar condition of a day: `weekday (Mon = 0) + 7 * holiday`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayClass(u8);

impl DayClass {
    pub fn new(weekday: u8, holiday: bool) -> Self {
        assert!(weekday < 7, "weekday index out of range");
        DayClass(weekday + 7 * u8::from(holiday))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn weekday(self) -> u8 {
        self.0 % 7
    }

    pub fn is_holiday(self) -> bool {
        self.0 >= 7
    }

    /// The same weekday without the holiday flag.
    pub fn non_holiday(self) -> DayClass {
        DayClass(self.weekday())
    }
}

pub fn day_class(date: NaiveDate, holidays: &HolidayCalendar) -> DayClass {
    DayClass::new(date.weekday().num_days_from_monday() as u8, holidays.is_holiday(date))
}

/// Which fallback produced a generated day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    None,
    /// The date's class was empty; the same weekday's non-holiday class answered.
    SameWeekday,
    /// Both classes were empty; the median over all training days answered.
    AllDays,
}

impl Fallback {
    pub fn as_str(self) -> &'static str {
        match self {
            Fallback::None => "none",
            Fallback::SameWeekday => "same_weekday",
            Fallback::AllDays => "all_days",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDay {
    pub date: NaiveDate,
    pub flows: Vec<f64>,
    pub fallback: Fallback,
}

/// A daily traffic generator fitted on one source segment.
pub trait Generator: Sync {
    fn name(&self) -> &str;
    fn generate(&self, date: NaiveDate, holidays: &HolidayCalendar) -> Result<GeneratedDay>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPattern {
    pub rtp: Vec<f64>,
    pub member_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub sensor_id: String,
    pub classes: Vec<Option<ClassPattern>>,
    /// Slotwise median over every training day.
    pub overall: ClassPattern,
}

fn slotwise_median(days: &[&Vec<f64>]) -> Vec<f64> {
    let t = days[0].len();
    let mut column = Vec::with_capacity(days.len());
    (0..t)
        .map(|s| {
            column.clear();
            column.extend(days.iter().map(|d| d[s]));
            median(&column).expect("non-empty")
        })
        .collect()
}

/// Fits one representative traffic pattern per populated day class.
pub fn fit_cluster_model(series: &TrafficSeries, holidays: &HolidayCalendar) -> Result<ClusterModel> {
    let days: Vec<(NaiveDate, Vec<f64>)> = series.complete_days().collect();
    if days.is_empty() {
        return Err(Error::domain(format!(
            "sensor {} has no complete days to fit on",
            series.sensor_id
        )));
    }
    let mut groups: Vec<Vec<&Vec<f64>>> = vec![Vec::new(); DAY_CLASSES];
    for (date, flows) in &days {
        groups[day_class(*date, holidays).index()].push(flows);
    }
    let classes = groups
        .iter()
        .map(|g| {
            (!g.is_empty()).then(|| ClassPattern {
                rtp: slotwise_median(g),
                member_days: g.len(),
            })
        })
        .collect();
    let all: Vec<&Vec<f64>> = days.iter().map(|(_, f)| f).collect();
    Ok(ClusterModel {
        sensor_id: series.sensor_id.clone(),
        classes,
        overall: ClassPattern {
            rtp: slotwise_median(&all),
            member_days: all.len(),
        },
    })
}

/// The RTP of the date's class, with the documented fallback chain.
pub fn generate_cluster(model: &ClusterModel, date: NaiveDate, holidays: &HolidayCalendar) -> Result<GeneratedDay> {
    if model.overall.member_days == 0 {
        return Err(Error::domain("cluster model has no training days"));
    }
    let class = day_class(date, holidays);
    let (pattern, fallback) = match &model.classes[class.index()] {
        Some(p) => (p, Fallback::None),
        None => match &model.classes[class.non_holiday().index()] {
            Some(p) => (p, Fallback::SameWeekday),
            None => (&model.overall, Fallback::AllDays),
        },
    };
    Ok(GeneratedDay {
        date,
        flows: pattern.rtp.clone(),
        fallback,
    })
}

impl Generator for ClusterModel {
    fn name(&self) -> &str {
        "cluster"
    }

    fn generate(&self, date: NaiveDate, holidays: &HolidayCalendar) -> Result<GeneratedDay> {
        generate_cluster(self, date, holidays)
    }
}

/// Copy of the source's real flows for the same date.
pub fn generate_nse(source: &TrafficSeries, date: NaiveDate) -> Result<Vec<f64>> {
    slice_day(source, date)
}

pub struct NseGenerator<'a> {
    pub source: &'a TrafficSeries,
}

impl Generator for NseGenerator<'_> {
    fn name(&self) -> &str {
        "nse"
    }

    fn generate(&self, date: NaiveDate, _holidays: &HolidayCalendar) -> Result<GeneratedDay> {
        Ok(GeneratedDay {
            date,
            flows: generate_nse(self.source, date)?,
            fallback: Fallback::None,
        })
    }
}

/// Writes `target_id,date,method,slot_index,flow,fallback_used`.
pub fn write_generated_csv<W: Write>(rows: &[(String, String, GeneratedDay)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["target_id", "date", "method", "slot_index", "flow", "fallback_used"])?;
    for (target, method, day) in rows {
        for (s, v) in day.flows.iter().enumerate() {
            w.write_record([
                target.clone(),
                day.date.to_string(),
                method.clone(),
                s.to_string(),
                sig6(*v),
                day.fallback.as_str().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("generated.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn class_encoding() {
        let cal = HolidayCalendar::new([d("2019-01-07"), d("2019-01-13")]);
        assert_eq!(day_class(d("2019-01-14"), &cal).index(), 0); // Monday
        assert_eq!(day_class(d("2019-01-07"), &cal).index(), 7); // holiday Monday
        assert_eq!(day_class(d("2019-01-13"), &cal).index(), 13); // holiday Sunday
        assert_eq!(day_class(d("2019-01-12"), &cal).index(), 5);
    }

    #[test]
    fn identical_days_reproduce() {
        let day: Vec<f64> = (0..96).map(|i| i as f64).collect();
        let s = TrafficSeries::from_days("S", 15, d("2019-01-07"), &vec![day.clone(); 21]).unwrap();
        let m = fit_cluster_model(&s, &HolidayCalendar::default()).unwrap();
        for c in m.classes.iter().flatten() {
            assert_eq!(c.rtp, day);
        }
        let total: usize = m.classes.iter().flatten().map(|c| c.member_days).sum();
        assert_eq!(total, 21);
    }

    #[test]
    fn class_median() {
        // three Mondays with 1, 3, 5 everywhere
        let start = d("2019-01-07");
        let days: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                let v = match i {
                    0 => 1.0,
                    7 => 3.0,
                    14 => 5.0,
                    _ => 100.0,
                };
                vec![v; 96]
            })
            .collect();
        let s = TrafficSeries::from_days("S", 15, start, &days).unwrap();
        let m = fit_cluster_model(&s, &HolidayCalendar::default()).unwrap();
        let monday = m.classes[0].as_ref().unwrap();
        assert_eq!(monday.member_days, 3);
        assert!(monday.rtp.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn holiday_falls_back_to_weekday() {
        let start = d("2019-01-07");
        let days: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64; 96]).collect();
        let s = TrafficSeries::from_days("S", 15, start, &days).unwrap();
        let m = fit_cluster_model(&s, &HolidayCalendar::default()).unwrap();
        // a holiday Tuesday after the training span
        let date = d("2019-03-05");
        let cal = HolidayCalendar::new([date]);
        let g = generate_cluster(&m, date, &cal).unwrap();
        assert_eq!(g.fallback, Fallback::SameWeekday);
        assert!(g.flows.iter().all(|&v| v == 1.0));

        let future = start + Duration::days(400);
        let g = generate_cluster(&m, future, &HolidayCalendar::default()).unwrap();
        assert_eq!(g.flows.len(), 96);
        assert_eq!(g.fallback, Fallback::None);
    }

    #[test]
    fn all_days_fallback() {
        // only Monday observed
        let s = TrafficSeries::from_days("S", 15, d("2019-01-07"), &[vec![4.0; 96]]).unwrap();
        let m = fit_cluster_model(&s, &HolidayCalendar::default()).unwrap();
        let g = generate_cluster(&m, d("2019-01-09"), &HolidayCalendar::default()).unwrap();
        assert_eq!(g.fallback, Fallback::AllDays);
        assert_eq!(g.flows, vec![4.0; 96]);
    }

    #[test]
    fn nse_copies_and_refuses_future() {
        let day: Vec<f64> = (0..96).map(|i| (i * 3) as f64).collect();
        let s = TrafficSeries::from_days("S", 15, d("2019-01-07"), std::slice::from_ref(&day)).unwrap();
        assert_eq!(generate_nse(&s, d("2019-01-07")).unwrap(), day);
        assert!(matches!(
            generate_nse(&s, d("2020-01-01")),
            Err(Error::Unavailable { .. })
        ));
    }
}
