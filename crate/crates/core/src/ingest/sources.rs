//! Loaders for sensor metadata, PoI counts and daily weather.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;

use super::flow::{check_header, csv_error, malformed};
use super::IngestError;
use crate::model::{
    LocalHour, PoIProfile, PoiDirection, PoiMatrix, PoiRadius, SensorMeta, WeatherCondition, WeatherRecord,
};

const SENSOR_HEADER: [&str; 9] = [
    "sensor_id",
    "district",
    "county",
    "city",
    "freeway",
    "lane",
    "direction",
    "latitude",
    "longitude",
];
const POI_HEADER: [&str; 5] = ["sensor_id", "direction", "category", "radius_km", "count"];
const WEATHER_HEADER: [&str; 4] = ["date", "condition", "temp_c", "visibility_miles"];

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T, IngestError>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| malformed(path, line, format!("{name} {raw:?}: {e}")))
}

/// Sensor metadata keyed by id.
pub fn load_sensors(path: &Path) -> Result<BTreeMap<String, SensorMeta>, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    check_header(
        path,
        &rdr.headers().map_err(|e| csv_error(path, e))?.clone(),
        &SENSOR_HEADER,
    )?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let meta = SensorMeta {
            sensor_id: rec[0].trim().to_string(),
            district: field(path, line, "district", &rec[1])?,
            county: rec[2].trim().to_string(),
            city: rec[3].trim().to_string(),
            freeway: rec[4].trim().to_string(),
            lane: field(path, line, "lane", &rec[5])?,
            direction: field(path, line, "direction", &rec[6])?,
            latitude: field(path, line, "latitude", &rec[7])?,
            longitude: field(path, line, "longitude", &rec[8])?,
        };
        meta.validate().map_err(|e| malformed(path, line, e.to_string()))?;
        if out.insert(meta.sensor_id.clone(), meta).is_some() {
            return Err(malformed(path, line, "duplicate sensor_id"));
        }
    }
    if out.is_empty() {
        return Err(IngestError::NoRecords(path.to_path_buf()));
    }
    Ok(out)
}

/// PoI profiles keyed by sensor. Every profile carries the full, sorted
/// category list of the file and a matrix for every radius present in it.
pub fn load_poi(path: &Path) -> Result<BTreeMap<String, PoIProfile>, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    check_header(
        path,
        &rdr.headers().map_err(|e| csv_error(path, e))?.clone(),
        &POI_HEADER,
    )?;
    let mut rows = Vec::new();
    let mut categories = BTreeSet::new();
    let mut radii = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let sensor = rec[0].trim().to_string();
        let dir: PoiDirection = field(path, line, "direction", &rec[1])?;
        let category = rec[2].trim().to_string();
        if category.is_empty() {
            return Err(malformed(path, line, "empty category"));
        }
        let km: f64 = field(path, line, "radius_km", &rec[3])?;
        let radius = PoiRadius::from_km(km).map_err(|e| malformed(path, line, e.to_string()))?;
        let count: u32 = field(path, line, "count", &rec[4])?;
        categories.insert(category.clone());
        radii.insert(radius);
        rows.push((line, sensor, dir, category, radius, count));
    }
    if rows.is_empty() {
        return Err(IngestError::NoRecords(path.to_path_buf()));
    }
    let names: Vec<String> = categories.into_iter().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let blank: BTreeMap<PoiRadius, PoiMatrix> = radii
        .iter()
        .map(|&r| (r, std::array::from_fn(|_| vec![0u32; names.len()])))
        .collect();

    let mut counts: BTreeMap<String, BTreeMap<PoiRadius, PoiMatrix>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (line, sensor, dir, category, radius, count) in rows {
        if !seen.insert((sensor.clone(), dir, category.clone(), radius)) {
            return Err(malformed(
                path,
                line,
                "duplicate (sensor, direction, category, radius) row",
            ));
        }
        let m = counts.entry(sensor).or_insert_with(|| blank.clone());
        m.get_mut(&radius).expect("radius registered")[dir.index()][index[category.as_str()]] = count;
    }
    counts
        .into_iter()
        .map(|(sensor, m)| {
            let profile =
                PoIProfile::new(sensor.clone(), names.clone(), m).map_err(|e| malformed(path, 0, e.to_string()))?;
            Ok((sensor, profile))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyWeather {
    pub condition: WeatherCondition,
    pub temperature_c: f64,
    pub visibility_miles: f64,
}

/// Weather summarized per day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeatherTable {
    pub days: BTreeMap<NaiveDate, DailyWeather>,
}

impl WeatherTable {
    /// Weather for the day of `at`. Falls back to the nearest recorded day
    /// (the earlier one on ties); the flag reports whether it did.
    pub fn lookup(&self, at: LocalHour) -> Option<(WeatherRecord, bool)> {
        let date = at.date();
        let (day, filled) = match self.days.get(&date) {
            Some(w) => (w, false),
            None => {
                let before = self.days.range(..date).next_back();
                let after = self.days.range(date..).next();
                let pick = match (before, after) {
                    (Some(b), Some(a)) => {
                        if (date - *b.0) <= (*a.0 - date) {
                            b
                        } else {
                            a
                        }
                    }
                    (Some(b), None) => b,
                    (None, Some(a)) => a,
                    (None, None) => return None,
                };
                (pick.1, true)
            }
        };
        let record = WeatherRecord {
            timestamp: at,
            condition: day.condition,
            temperature_c: day.temperature_c,
            visibility_miles: day.visibility_miles,
        };
        Some((record, filled))
    }
}

/// Reads weather observations and reduces each day to its most frequent
/// condition (earlier enum variant on ties) and mean temperature and
/// visibility.
pub fn load_weather(path: &Path) -> Result<WeatherTable, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    check_header(
        path,
        &rdr.headers().map_err(|e| csv_error(path, e))?.clone(),
        &WEATHER_HEADER,
    )?;
    #[derive(Default)]
    struct Acc {
        conditions: BTreeMap<WeatherCondition, usize>,
        temp: f64,
        vis: f64,
        n: usize,
    }
    let mut acc: BTreeMap<NaiveDate, Acc> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d")
            .map_err(|e| malformed(path, line, format!("date {:?}: {e}", &rec[0])))?;
        let condition: WeatherCondition = field(path, line, "condition", &rec[1])?;
        let temp: f64 = field(path, line, "temp_c", &rec[2])?;
        let vis: f64 = field(path, line, "visibility_miles", &rec[3])?;
        if !temp.is_finite() {
            return Err(malformed(path, line, "temp_c must be finite"));
        }
        if !(vis.is_finite() && vis >= 0.0) {
            return Err(malformed(path, line, "visibility_miles must be finite and >= 0"));
        }
        let a = acc.entry(date).or_default();
        *a.conditions.entry(condition).or_default() += 1;
        a.temp += temp;
        a.vis += vis;
        a.n += 1;
    }
    if acc.is_empty() {
        return Err(IngestError::NoRecords(path.to_path_buf()));
    }
    let days = acc
        .into_iter()
        .map(|(date, a)| {
            let condition = a
                .conditions
                .iter()
                .fold(None::<(WeatherCondition, usize)>, |best, (&c, &n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((c, n)),
                })
                .expect("day has observations")
                .0;
            let daily = DailyWeather {
                condition,
                temperature_c: a.temp / a.n as f64,
                visibility_miles: a.vis / a.n as f64,
            };
            (date, daily)
        })
        .collect();
    Ok(WeatherTable { days })
}
