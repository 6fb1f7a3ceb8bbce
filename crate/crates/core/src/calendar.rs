//! Holiday calendar and day filters.

use std::collections::BTreeSet;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        HolidayCalendar {
            dates: dates.into_iter().collect(),
        }
    }

    /// One ISO-8601 date per line; blank lines and `#` comments are skipped.
    ///
    /// A repeated date is a format error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Format {
                row: i + 1,
                message: format!("invalid date '{line}': {e}"),
            })?;
            if !dates.insert(date) {
                return Err(Error::Format {
                    row: i + 1,
                    message: format!("duplicate holiday {date}"),
                });
            }
        }
        Ok(HolidayCalendar { dates })
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }

    /// Monday to Friday and not a holiday.
    pub fn is_working_weekday(&self, date: NaiveDate) -> bool {
        !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) && !self.is_holiday(date)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Which days feed a profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayFilter {
    /// Monday to Friday, holidays excluded.
    #[default]
    Weekdays,
    /// Saturdays, Sundays and holidays.
    Weekends,
    All,
}

impl DayFilter {
    pub fn accepts(self, date: NaiveDate, holidays: &HolidayCalendar) -> bool {
        match self {
            DayFilter::Weekdays => holidays.is_working_weekday(date),
            DayFilter::Weekends => !holidays.is_working_weekday(date),
            DayFilter::All => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayFilter::Weekdays => "weekdays",
            DayFilter::Weekends => "weekends",
            DayFilter::All => "all",
        }
    }
}

impl FromStr for DayFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weekdays" => Ok(DayFilter::Weekdays),
            "weekends" => Ok(DayFilter::Weekends),
            "all" => Ok(DayFilter::All),
            _ => Err(Error::argument(format!("unknown day filter '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn parse_and_query() {
        let cal = HolidayCalendar::parse("2019-01-01\n\n# kings\n2019-01-06\n").unwrap();
        assert_eq!(cal.len(), 2);
        assert!(cal.is_holiday(d("2019-01-01")));
        assert!(!cal.is_working_weekday(d("2019-01-01"))); // holiday Tuesday
        assert!(cal.is_working_weekday(d("2019-01-02")));
        assert!(!cal.is_working_weekday(d("2019-01-05"))); // Saturday
    }

    #[test]
    fn duplicate_and_garbage_rejected() {
        assert!(HolidayCalendar::parse("2019-01-01\n2019-01-01\n").is_err());
        assert!(HolidayCalendar::parse("yesterday\n").is_err());
    }

    #[test]
    fn filters_partition() {
        let cal = HolidayCalendar::new([d("2019-01-01")]);
        for day in d("2018-12-25").iter_days().take(21) {
            let wd = DayFilter::Weekdays.accepts(day, &cal);
            let we = DayFilter::Weekends.accepts(day, &cal);
            assert!(wd ^ we);
            assert!(DayFilter::All.accepts(day, &cal));
        }
    }
}
