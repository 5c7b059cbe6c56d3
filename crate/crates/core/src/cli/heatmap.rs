//! Calendar heatmap of per-date MAPE as a standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::io::{write_atomic, IoError};

const CELL: i64 = 36;
const GAP: i64 = 4;
const LEFT: i64 = 20;
const TOP: i64 = 56;
const LIGHT: (f64, f64, f64) = (247.0, 251.0, 255.0);
const DARK: (f64, f64, f64) = (8.0, 48.0, 107.0);
const UNDEFINED_FILL: &str = "#dddddd";
const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

#[derive(Debug, thiserror::Error)]
pub enum HeatmapError {
    #[error("{0}: no dates to plot")]
    Empty(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Reads `date,mape` (extra columns ignored). `undefined` MAPE becomes `None`.
pub fn read_date_mape(path: &Path) -> Result<BTreeMap<NaiveDate, Option<f64>>, HeatmapError> {
    let err = |message: String| HeatmapError::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| err(format!("missing column {name:?}")))
    };
    let (date_col, mape_col) = (col("date")?, col("mape")?);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let date = NaiveDate::parse_from_str(rec[date_col].trim(), "%Y-%m-%d")
            .map_err(|e| err(format!("date {:?}: {e}", &rec[date_col])))?;
        let raw = rec[mape_col].trim();
        let mape = if raw == "undefined" || raw.is_empty() {
            None
        } else {
            let v: f64 = raw.parse().map_err(|e| err(format!("mape {raw:?}: {e}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(format!("mape {raw:?} must be a finite value >= 0")));
            }
            Some(v)
        };
        out.insert(date, mape);
    }
    if out.is_empty() {
        return Err(HeatmapError::Empty(path.display().to_string()));
    }
    Ok(out)
}

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(LIGHT.0, DARK.0),
        mix(LIGHT.1, DARK.1),
        mix(LIGHT.2, DARK.2)
    )
}

/// Renders the SVG text. Rows are Monday-first weeks.
pub fn render_calendar_heatmap(values: &BTreeMap<NaiveDate, Option<f64>>) -> String {
    let defined: Vec<f64> = values.values().flatten().copied().collect();
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = *values.keys().next().expect("non-empty");
    let last = *values.keys().next_back().expect("non-empty");
    let week0 = first - chrono::Duration::days(first.weekday().num_days_from_monday() as i64);
    let weeks = (last - week0).num_days() / 7 + 1;

    let width = LEFT * 2 + 7 * (CELL + GAP);
    let grid_bottom = TOP + weeks * (CELL + GAP);
    let height = grid_bottom + 70;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="22" font-size="14">Daily MAPE, {first} to {last}</text>"#
    );
    for (i, name) in WEEKDAYS.iter().enumerate() {
        let x = LEFT + i as i64 * (CELL + GAP) + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{name}</text>"#,
            TOP - 8
        );
    }
    for (date, mape) in values {
        let offset = (*date - week0).num_days();
        let (row, col) = (offset / 7, offset % 7);
        let x = LEFT + col * (CELL + GAP);
        let y = TOP + row * (CELL + GAP);
        let (fill, label) = match mape {
            Some(v) => {
                let t = if max > min { (v - min) / (max - min) } else { 0.0 };
                (color(t), format!("{v:.2}%"))
            }
            None => (UNDEFINED_FILL.to_string(), "undefined".to_string()),
        };
        let _ = writeln!(
            s,
            r#"<rect class="day" data-date="{date}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}"><title>{date}: {label}</title></rect>"#
        );
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" font-size="10" fill="#555555">{}</text>"##,
            x + 3,
            y + 12,
            date.day()
        );
    }

    let legend_y = grid_bottom + 16;
    let legend_w = 7 * (CELL + GAP) - GAP;
    let _ = writeln!(
        s,
        r#"<defs><linearGradient id="scale" x1="0" x2="1" y1="0" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        color(0.0),
        color(1.0)
    );
    let _ = writeln!(
        s,
        r#"<rect class="legend" x="{LEFT}" y="{legend_y}" width="{legend_w}" height="12" fill="url(#scale)"/>"#
    );
    let (lo, hi) = if defined.is_empty() {
        ("n/a".to_string(), "n/a".to_string())
    } else {
        (format!("{min:.2}%"), format!("{max:.2}%"))
    };
    let _ = writeln!(
        s,
        r#"<text class="legend-min" x="{LEFT}" y="{}" font-size="11">min {lo}</text>"#,
        legend_y + 28
    );
    let _ = writeln!(
        s,
        r#"<text class="legend-max" x="{}" y="{}" font-size="11" text-anchor="end">max {hi}</text>"#,
        LEFT + legend_w,
        legend_y + 28
    );
    s.push_str("</svg>\n");
    s
}

/// Reads a per-date MAPE CSV and writes the calendar SVG to `path`.
pub fn emit_calendar_heatmap(per_date_mape_csv: &Path, path: &Path) -> Result<(), HeatmapError> {
    let values = read_date_mape(per_date_mape_csv)?;
    let svg = render_calendar_heatmap(&values);
    write_atomic(path, |w| w.write_all(svg.as_bytes()))?;
    Ok(())
}
