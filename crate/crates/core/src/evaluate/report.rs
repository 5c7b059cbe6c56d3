use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{breakdown_by_step, compute_metrics, Dimension, EvalPair, Metrics};
use super::EvalError;
use crate::io::{write_atomic, IoError};

pub const REPORT_SCHEMA_VERSION: &str = "1.0.0";
pub const METRIC_REPORT_SCHEMA: &str = include_str!("../../schemas/metric_report.schema.json");

/// Steps summarized alongside the average.
pub const SUMMARY_STEPS: [u32; 4] = [3, 6, 9, 12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: String,
    pub horizon: usize,
    pub per_step: BTreeMap<u32, Metrics>,
    /// Pooled over every cell of every step.
    pub average: Metrics,
    /// dimension -> key -> step -> metrics; empty cells are absent.
    #[serde(default)]
    pub breakdowns: BTreeMap<String, BTreeMap<String, BTreeMap<u32, Metrics>>>,
}

impl MetricReport {
    /// Rows for steps 3, 6, 9, 12 (those within the horizon) and `avg`.
    pub fn summary(&self) -> Vec<(String, Metrics)> {
        let mut rows: Vec<(String, Metrics)> = SUMMARY_STEPS
            .iter()
            .filter_map(|s| self.per_step.get(s).map(|m| (s.to_string(), *m)))
            .collect();
        rows.push(("avg".into(), self.average));
        rows
    }

    pub fn add_breakdown(&mut self, pairs: &[EvalPair], dim: Dimension) -> Result<(), EvalError> {
        self.breakdowns
            .insert(dim.as_str().into(), breakdown_by_step(pairs, dim)?);
        Ok(())
    }

    /// Flat rows in CSV order: horizon steps, `avg`, then breakdown cells.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = self
            .per_step
            .iter()
            .map(|(s, m)| ReportRow::new("horizon", "all", s.to_string(), m))
            .collect();
        rows.push(ReportRow::new("horizon", "all", "avg".into(), &self.average));
        for (dim, keys) in &self.breakdowns {
            for (key, steps) in keys {
                for (s, m) in steps {
                    rows.push(ReportRow::new(dim, key, s.to_string(), m));
                }
            }
        }
        rows
    }
}

/// Metrics for each step and the all-step average, without breakdowns.
pub fn per_horizon_report(pairs: &[EvalPair]) -> Result<MetricReport, EvalError> {
    let horizon = pairs.iter().map(EvalPair::horizon).max().ok_or(EvalError::NoSamples)?;
    let mut per_step = BTreeMap::new();
    for step in 0..horizon {
        if let Ok(m) = compute_metrics(pairs, |_, s| s == step) {
            per_step.insert(step as u32 + 1, m);
        }
    }
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        horizon,
        per_step,
        average: compute_metrics(pairs, |_, _| true)?,
        breakdowns: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dimension: String,
    pub key: String,
    pub step: String,
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub count: usize,
}

impl ReportRow {
    fn new(dimension: &str, key: &str, step: String, m: &Metrics) -> Self {
        Self {
            dimension: dimension.into(),
            key: key.into(),
            step,
            rmse: m.rmse,
            mae: m.mae,
            mape: m.mape,
            count: m.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(EvalError::Format(other.to_string())),
        }
    }
}

const UNDEFINED: &str = "undefined";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_report(report: &MetricReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    match format {
        ReportFormat::Json => write_atomic(path, |w| {
            serde_json::to_writer_pretty(&mut *w, report).map_err(std::io::Error::other)?;
            w.write_all(b"\n")
        })?,
        ReportFormat::Csv => write_atomic(path, |w| {
            writeln!(w, "dimension,key,step,rmse,mae,mape,count")?;
            for r in report.rows() {
                let mape = r.mape.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string());
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    csv_field(&r.dimension),
                    csv_field(&r.key),
                    r.step,
                    r.rmse,
                    r.mae,
                    mape,
                    r.count
                )?;
            }
            Ok(())
        })?,
    }
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<MetricReport, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>, EvalError> {
    let parse_err = |message: String| EvalError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{}: {e}", &rec[i])))
        };
        rows.push(ReportRow {
            dimension: rec[0].to_string(),
            key: rec[1].to_string(),
            step: rec[2].to_string(),
            rmse: num(3)?,
            mae: num(4)?,
            mape: if &rec[5] == UNDEFINED { None } else { Some(num(5)?) },
            count: rec[6].parse().map_err(|e| parse_err(format!("count: {e}")))?,
        });
    }
    Ok(rows)
}

/// `{key_column},mape,count`, one row per key. Undefined MAPE is written as
/// `undefined`.
pub fn write_key_mape_csv(path: &Path, key_column: &str, per_key: &BTreeMap<String, Metrics>) -> Result<(), EvalError> {
    write_atomic(path, |w| {
        writeln!(w, "{key_column},mape,count")?;
        for (k, m) in per_key {
            let mape = m.mape.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string());
            writeln!(w, "{},{},{}", csv_field(k), mape, m.count)?;
        }
        Ok(())
    })?;
    Ok(())
}
