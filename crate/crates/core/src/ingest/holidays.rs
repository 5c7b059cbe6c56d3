use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};

use super::flow::{check_header, csv_error, malformed};
use super::IngestError;
use crate::io::IoError;

const HOLIDAY_CSV: &str = include_str!("../../assets/data/us_federal_holidays.csv");

/// Years covered by the bundled holiday table.
pub const HOLIDAY_YEARS: RangeInclusive<i32> = 2017..=2021;

/// Holiday names by date, covering every day of the years between the
/// earliest and latest listed dates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HolidayTable {
    days: BTreeMap<NaiveDate, String>,
    years: RangeInclusive<i32>,
}

impl HolidayTable {
    /// US federal holidays 2017-2021.
    pub fn bundled() -> &'static HolidayTable {
        static TABLE: OnceLock<HolidayTable> = OnceLock::new();
        TABLE.get_or_init(|| Self::parse(Path::new("<bundled>"), HOLIDAY_CSV).expect("bundled holiday table parses"))
    }

    /// Reads a `date,name` CSV.
    pub fn load(path: &Path) -> Result<HolidayTable, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(path, &text)
    }

    fn parse(path: &Path, text: &str) -> Result<HolidayTable, IngestError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        check_header(
            path,
            &rdr.headers().map_err(|e| csv_error(path, e))?.clone(),
            &["date", "name"],
        )?;
        let mut days = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
                .map_err(|e| malformed(path, line, format!("date {:?}: {e}", &rec[0])))?;
            days.insert(date, rec[1].trim().to_string());
        }
        let (Some(first), Some(last)) = (days.keys().next(), days.keys().next_back()) else {
            return Err(IngestError::NoRecords(path.to_path_buf()));
        };
        let years = first.year()..=last.year();
        Ok(HolidayTable { days, years })
    }

    pub fn years(&self) -> RangeInclusive<i32> {
        self.years.clone()
    }

    pub fn lookup(&self, date: NaiveDate) -> Result<Option<&str>, IngestError> {
        if !self.years.contains(&date.year()) {
            return Err(IngestError::HolidayCoverage(date));
        }
        Ok(self.days.get(&date).map(String::as_str))
    }
}

/// US federal holiday falling on `date`, if any.
pub fn lookup_holiday(date: NaiveDate) -> Result<Option<&'static str>, IngestError> {
    HolidayTable::bundled().lookup(date)
}
