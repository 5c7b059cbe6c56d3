use std::collections::BTreeMap;
use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::IngestError;
use crate::model::{FlowSeries, LocalHour};

/// One sub-hourly detector reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFlowRecord {
    pub sensor_id: String,
    pub timestamp: NaiveDateTime,
    pub count: u32,
}

const FLOW_HEADER: [&str; 3] = ["sensor_id", "timestamp", "count"];

pub(crate) fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(IngestError::Schema {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

pub(crate) fn malformed(path: &Path, line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    malformed(path, line, err.to_string())
}

/// Reads a flow CSV and returns the raw records in file order.
pub fn read_flow_records(path: &Path, granularity_minutes: u32) -> Result<Vec<RawFlowRecord>, IngestError> {
    if granularity_minutes == 0 || 60 % granularity_minutes != 0 {
        return Err(IngestError::Granularity(granularity_minutes));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    check_header(path, &headers, &FLOW_HEADER)?;
    let mut last_seen: BTreeMap<String, NaiveDateTime> = BTreeMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let sensor_id = rec[0].trim().to_string();
        if sensor_id.is_empty() {
            return Err(malformed(path, line, "empty sensor_id"));
        }
        let timestamp = NaiveDateTime::parse_from_str(rec[1].trim(), LocalHour::FORMAT)
            .map_err(|e| malformed(path, line, format!("timestamp {:?}: {e}", &rec[1])))?;
        if timestamp.second() != 0 || timestamp.minute() % granularity_minutes != 0 {
            return Err(malformed(
                path,
                line,
                format!("timestamp {timestamp} is not on a {granularity_minutes}-minute boundary"),
            ));
        }
        let count: u32 = rec[2]
            .trim()
            .parse()
            .map_err(|_| malformed(path, line, format!("count {:?} is not a non-negative integer", &rec[2])))?;
        if let Some(prev) = last_seen.get(&sensor_id) {
            if timestamp <= *prev {
                return Err(IngestError::NonMonotone {
                    path: path.to_path_buf(),
                    line,
                    sensor_id,
                });
            }
        }
        last_seen.insert(sensor_id.clone(), timestamp);
        out.push(RawFlowRecord {
            sensor_id,
            timestamp,
            count,
        });
    }
    if out.is_empty() {
        return Err(IngestError::NoRecords(path.to_path_buf()));
    }
    Ok(out)
}

/// Sums sub-hourly counts into hours. An hour missing any of its
/// `60 / granularity` bins becomes `None`.
pub fn resample_hourly(records: &[RawFlowRecord], granularity_minutes: u32) -> Result<Vec<FlowSeries>, IngestError> {
    if granularity_minutes == 0 || 60 % granularity_minutes != 0 {
        return Err(IngestError::Granularity(granularity_minutes));
    }
    let bins_per_hour = 60 / granularity_minutes;
    let mut per_sensor: BTreeMap<&str, BTreeMap<LocalHour, (u64, u32)>> = BTreeMap::new();
    for r in records {
        let cell = per_sensor
            .entry(&r.sensor_id)
            .or_default()
            .entry(LocalHour::floor(r.timestamp))
            .or_default();
        cell.0 += r.count as u64;
        cell.1 += 1;
    }
    let mut out = Vec::with_capacity(per_sensor.len());
    for (sensor_id, hours) in per_sensor {
        let (&start, _) = hours.first_key_value().expect("sensor has records");
        let (&end, _) = hours.last_key_value().expect("sensor has records");
        let len = start.hours_until(end) as usize + 1;
        let mut values = vec![None; len];
        for (hour, (sum, bins)) in hours {
            if bins == bins_per_hour {
                let v = u32::try_from(sum).map_err(|_| IngestError::Overflow {
                    sensor_id: sensor_id.to_string(),
                    hour,
                })?;
                values[start.hours_until(hour) as usize] = Some(v);
            }
        }
        out.push(FlowSeries {
            sensor_id: sensor_id.to_string(),
            start,
            values,
        });
    }
    Ok(out)
}

/// Loads one flow CSV into hourly series, one per sensor, sorted by id.
pub fn load_flow(path: &Path, granularity_minutes: u32) -> Result<Vec<FlowSeries>, IngestError> {
    let records = read_flow_records(path, granularity_minutes)?;
    resample_hourly(&records, granularity_minutes)
}
