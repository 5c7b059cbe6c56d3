//! Shared domain types.
//!
//! Every type with an invariant exposes a validating constructor and a
//! `validate` method; readers of serialized data call `validate` after
//! deserializing so that a malformed file is rejected at the boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Rejection of a value that violates a type invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

fn ensure(cond: bool, field: &str, message: impl FnOnce() -> String) -> Result<(), ValidationError> {
    if cond {
        Ok(())
    } else {
        Err(ValidationError::new(field, message()))
    }
}

/// Naive local time truncated to the hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalHour(NaiveDateTime);

impl LocalHour {
    pub const FORMAT: &'static str = "%Y-%m-%d %H:%M";

    pub fn new(at: NaiveDateTime) -> Result<Self, ValidationError> {
        ensure(
            at.minute() == 0 && at.second() == 0 && at.nanosecond() == 0,
            "timestamp",
            || format!("{at} is not aligned to the hour"),
        )?;
        Ok(Self(at))
    }

    pub fn from_ymdh(year: i32, month: u32, day: u32, hour: u32) -> Result<Self, ValidationError> {
        NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(hour, 0, 0))
            .map(Self)
            .ok_or_else(|| {
                ValidationError::new(
                    "timestamp",
                    format!("{year}-{month}-{day} {hour}:00 is not a valid hour"),
                )
            })
    }

    /// Truncates any timestamp down to its hour.
    pub fn floor(at: NaiveDateTime) -> Self {
        Self(at.date().and_hms_opt(at.hour(), 0, 0).expect("hour in range"))
    }

    pub fn datetime(self) -> NaiveDateTime {
        self.0
    }

    pub fn date(self) -> NaiveDate {
        self.0.date()
    }

    pub fn hour(self) -> u32 {
        self.0.hour()
    }

    pub fn weekday(self) -> Weekday {
        self.0.weekday()
    }

    pub fn plus_hours(self, hours: i64) -> Self {
        Self(self.0 + Duration::hours(hours))
    }

    /// Whole hours from `self` to `later` (negative if `later` is earlier).
    pub fn hours_until(self, later: LocalHour) -> i64 {
        (later.0 - self.0).num_hours()
    }
}

impl fmt::Display for LocalHour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(Self::FORMAT))
    }
}

impl FromStr for LocalHour {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let at = NaiveDateTime::parse_from_str(s.trim(), Self::FORMAT)
            .map_err(|e| ValidationError::new("timestamp", format!("{s:?}: {e}")))?;
        Self::new(at)
    }
}

impl Serialize for LocalHour {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocalHour {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TravelDirection {
    Eastbound,
    Westbound,
    Northbound,
    Southbound,
}

impl TravelDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Eastbound => "eastbound",
            Self::Westbound => "westbound",
            Self::Northbound => "northbound",
            Self::Southbound => "southbound",
        }
    }
}

impl FromStr for TravelDirection {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eastbound" | "e" => Ok(Self::Eastbound),
            "westbound" | "w" => Ok(Self::Westbound),
            "northbound" | "n" => Ok(Self::Northbound),
            "southbound" | "s" => Ok(Self::Southbound),
            other => Err(ValidationError::new(
                "direction",
                format!("unknown travel direction {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub sensor_id: String,
    pub district: u32,
    pub county: String,
    pub city: String,
    /// Freeway and direction label, e.g. `US50-E`.
    pub freeway: String,
    pub lane: u32,
    pub direction: TravelDirection,
    pub latitude: f64,
    pub longitude: f64,
}

impl SensorMeta {
    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(!self.sensor_id.is_empty(), "sensor_id", || "must not be empty".into())?;
        ensure(self.lane >= 1, "lane", || format!("{} < 1", self.lane))?;
        ensure((-90.0..=90.0).contains(&self.latitude), "latitude", || {
            format!("{} outside [-90, 90]", self.latitude)
        })?;
        ensure((-180.0..=180.0).contains(&self.longitude), "longitude", || {
            format!("{} outside [-180, 180]", self.longitude)
        })
    }
}

/// Compass sector around a sensor in which PoIs are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoiDirection {
    East,
    West,
    North,
    South,
}

impl PoiDirection {
    pub const ALL: [PoiDirection; 4] = [Self::East, Self::West, Self::North, Self::South];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for PoiDirection {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "east" | "e" => Ok(Self::East),
            "west" | "w" => Ok(Self::West),
            "north" | "n" => Ok(Self::North),
            "south" | "s" => Ok(Self::South),
            other => Err(ValidationError::new(
                "direction",
                format!("unknown PoI direction {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoiRadius {
    #[serde(rename = "1km")]
    Km1,
    #[serde(rename = "3km")]
    Km3,
    #[serde(rename = "5km")]
    Km5,
}

impl PoiRadius {
    pub fn from_km(km: f64) -> Result<Self, ValidationError> {
        match km {
            1.0 => Ok(Self::Km1),
            3.0 => Ok(Self::Km3),
            5.0 => Ok(Self::Km5),
            other => Err(ValidationError::new(
                "radius_km",
                format!("{other} is not one of 1, 3, 5"),
            )),
        }
    }
}

/// Four rows (east, west, north, south), one column per category.
pub type PoiMatrix = [Vec<u32>; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoIProfile {
    pub sensor_id: String,
    pub category_names: Vec<String>,
    pub counts: BTreeMap<PoiRadius, PoiMatrix>,
}

impl PoIProfile {
    pub fn new(
        sensor_id: impl Into<String>,
        category_names: Vec<String>,
        counts: BTreeMap<PoiRadius, PoiMatrix>,
    ) -> Result<Self, ValidationError> {
        let profile = Self {
            sensor_id: sensor_id.into(),
            category_names,
            counts,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.category_names.len();
        let mut seen = std::collections::HashSet::new();
        for name in &self.category_names {
            ensure(seen.insert(name), "category_names", || {
                format!("duplicate category {name:?}")
            })?;
        }
        for (radius, matrix) in &self.counts {
            for row in matrix {
                ensure(row.len() == n, "counts", || {
                    format!("{radius:?} row has {} columns, expected {n}", row.len())
                })?;
            }
        }
        Ok(())
    }

    pub fn at(&self, radius: PoiRadius) -> Option<&PoiMatrix> {
        self.counts.get(&radius)
    }
}

/// Region attribute bucket that PoI categories are summarized into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionBucket {
    Transportation,
    Commercial,
    Residential,
    Educational,
    Recreational,
    Industrial,
    Other,
}

impl RegionBucket {
    pub const ALL: [RegionBucket; 7] = [
        Self::Transportation,
        Self::Commercial,
        Self::Residential,
        Self::Educational,
        Self::Recreational,
        Self::Industrial,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Transportation => "transportation",
            Self::Commercial => "commercial",
            Self::Residential => "residential",
            Self::Educational => "educational",
            Self::Recreational => "recreational",
            Self::Industrial => "industrial",
            Self::Other => "other",
        }
    }
}

impl FromStr for RegionBucket {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ValidationError::new("bucket", format!("unknown region bucket {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionShare {
    pub label: RegionBucket,
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionAttributes {
    /// Sorted by descending share.
    pub entries: Vec<RegionShare>,
}

impl RegionAttributes {
    pub fn new(entries: Vec<RegionShare>) -> Result<Self, ValidationError> {
        let attrs = Self { entries };
        attrs.validate()?;
        Ok(attrs)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for e in &self.entries {
            ensure((0.0..=1.0).contains(&e.share), "shares", || {
                format!("{} share {} outside [0, 1]", e.label.as_str(), e.share)
            })?;
        }
        let total: f64 = self.entries.iter().map(|e| e.share).sum();
        ensure(total <= 1.0 + 1e-9, "shares", || format!("shares sum to {total} > 1"))?;
        ensure(
            self.entries.windows(2).all(|w| w[0].share >= w[1].share),
            "labels",
            || "labels must be sorted by descending share".into(),
        )?;
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            ensure(seen.insert(e.label), "labels", || {
                format!("duplicate label {}", e.label.as_str())
            })?;
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = RegionBucket> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeatherCondition {
    Sunny,
    Rain,
    Foggy,
    Thunderstorm,
    Sleet,
    Storm,
    Snow,
}

impl WeatherCondition {
    pub const ALL: [WeatherCondition; 7] = [
        Self::Sunny,
        Self::Rain,
        Self::Foggy,
        Self::Thunderstorm,
        Self::Sleet,
        Self::Storm,
        Self::Snow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sunny => "Sunny",
            Self::Rain => "Rain",
            Self::Foggy => "Foggy",
            Self::Thunderstorm => "Thunderstorm",
            Self::Sleet => "Sleet",
            Self::Storm => "Storm",
            Self::Snow => "Snow",
        }
    }
}

impl FromStr for WeatherCondition {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ValidationError::new("condition", format!("unknown weather condition {s:?}")))
    }
}

impl fmt::Display for WeatherCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: LocalHour,
    pub condition: WeatherCondition,
    pub temperature_c: f64,
    pub visibility_miles: f64,
}

impl WeatherRecord {
    pub fn new(
        timestamp: LocalHour,
        condition: WeatherCondition,
        temperature_c: f64,
        visibility_miles: f64,
    ) -> Result<Self, ValidationError> {
        let rec = Self {
            timestamp,
            condition,
            temperature_c,
            visibility_miles,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(self.temperature_c.is_finite(), "temperature", || {
            "must be finite".into()
        })?;
        ensure(
            self.visibility_miles.is_finite() && self.visibility_miles >= 0.0,
            "visibility",
            || format!("{} must be a finite value >= 0", self.visibility_miles),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarContext {
    pub timestamp: LocalHour,
    pub weekday: Weekday,
    pub holiday: Option<String>,
}

impl CalendarContext {
    pub fn new(timestamp: LocalHour, holiday: Option<String>) -> Self {
        Self {
            timestamp,
            weekday: timestamp.weekday(),
            holiday,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(self.weekday == self.timestamp.weekday(), "weekday", || {
            format!(
                "{} falls on {}, not {}",
                self.timestamp,
                self.timestamp.weekday(),
                self.weekday
            )
        })
    }

    pub fn is_weekend(&self) -> bool {
        matches!(self.weekday, Weekday::Sat | Weekday::Sun)
    }
}

/// Hourly volumes for one sensor. `None` marks an hour whose source bins
/// were incomplete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSeries {
    pub sensor_id: String,
    pub start: LocalHour,
    pub values: Vec<Option<u32>>,
}

impl FlowSeries {
    pub fn hour_at(&self, index: usize) -> LocalHour {
        self.start.plus_hours(index as i64)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Prompt content toggles. The five `include_*` flags span the input
/// ablation grid; see [`AblationSetting`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub include_date: bool,
    pub include_weather: bool,
    pub include_pois: bool,
    pub include_domain_knowledge: bool,
    pub include_cot: bool,
    pub explanation_mode: bool,
    pub few_shot_explanations: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            include_date: true,
            include_weather: true,
            include_pois: true,
            include_domain_knowledge: true,
            include_cot: true,
            explanation_mode: false,
            few_shot_explanations: 2,
        }
    }
}

/// Named input settings A through K of the prompt ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationSetting {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
}

impl AblationSetting {
    pub const ALL: [AblationSetting; 11] = [
        Self::A,
        Self::B,
        Self::C,
        Self::D,
        Self::E,
        Self::F,
        Self::G,
        Self::H,
        Self::I,
        Self::J,
        Self::K,
    ];

    /// (date, weather, pois, domain knowledge, cot)
    pub fn flags(self) -> (bool, bool, bool, bool, bool) {
        match self {
            Self::A => (false, false, false, false, false),
            Self::B => (true, false, false, false, false),
            Self::C => (false, true, false, false, false),
            Self::D => (false, false, true, false, false),
            Self::E => (true, true, false, false, false),
            Self::F => (true, false, true, false, false),
            Self::G => (false, true, true, false, false),
            Self::H => (true, true, true, false, false),
            Self::I => (true, true, true, true, false),
            Self::J => (true, true, true, false, true),
            Self::K => (true, true, true, true, true),
        }
    }

    pub fn options(self) -> PromptOptions {
        let (date, weather, pois, knowledge, cot) = self.flags();
        PromptOptions {
            include_date: date,
            include_weather: weather,
            include_pois: pois,
            include_domain_knowledge: knowledge,
            include_cot: cot,
            ..PromptOptions::default()
        }
    }
}

impl FromStr for AblationSetting {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|a| format!("{a:?}") == upper)
            .ok_or_else(|| ValidationError::new("setting", format!("{s:?} is not one of A-K")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub description: String,
    pub event_hour: LocalHour,
}

impl Scenario {
    pub fn new(description: impl Into<String>, event_hour: LocalHour) -> Result<Self, ValidationError> {
        let s = Self {
            description: description.into(),
            event_hour,
        };
        s.validate()?;
        Ok(s)
    }

    /// Road accident at the given hour.
    pub fn accident(event_hour: LocalHour) -> Self {
        Self {
            description: format!(
                "A serious traffic accident occurred on this road at {}",
                crate::prompt::clock_label(event_hour.hour())
            ),
            event_hour,
        }
    }

    /// Sandstorm at the given hour.
    pub fn sandstorm(event_hour: LocalHour) -> Self {
        Self {
            description: format!(
                "A severe sandstorm broke out at {}",
                crate::prompt::clock_label(event_hour.hour())
            ),
            event_hour,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(!self.description.trim().is_empty(), "description", || {
            "must not be empty".into()
        })?;
        ensure(!self.description.contains('\n'), "description", || {
            "must be a single line".into()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTask {
    pub id: String,
    pub meta: SensorMeta,
    pub region: RegionAttributes,
    pub weather: WeatherRecord,
    /// Context at the anchor hour, the hour of the last history value.
    pub calendar: CalendarContext,
    pub h_in: usize,
    pub history: Vec<u32>,
    pub horizon: usize,
    pub options: PromptOptions,
    pub scenario: Option<Scenario>,
}

impl PredictionTask {
    pub const DEFAULT_HORIZON: usize = 12;

    pub fn anchor(&self) -> LocalHour {
        self.calendar.timestamp
    }

    /// Local hour of 1-based prediction step `step`.
    pub fn step_hour(&self, step: usize) -> LocalHour {
        self.anchor().plus_hours(step as i64)
    }

    pub fn history_start(&self) -> LocalHour {
        self.anchor().plus_hours(1 - self.h_in as i64)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(!self.id.is_empty(), "id", || "must not be empty".into())?;
        self.meta.validate()?;
        self.region.validate()?;
        self.weather.validate()?;
        self.calendar.validate()?;
        ensure(self.h_in >= 1, "h_in", || "must be >= 1".into())?;
        ensure(self.history.len() == self.h_in, "history", || {
            format!("length {} does not match h_in {}", self.history.len(), self.h_in)
        })?;
        ensure(self.horizon >= 1, "horizon", || "must be >= 1".into())?;
        if let Some(scenario) = &self.scenario {
            scenario.validate()?;
            let end = self.anchor().plus_hours(self.horizon as i64);
            ensure(
                scenario.event_hour >= self.history_start() && scenario.event_hour <= end,
                "event_hour",
                || format!("{} outside [{}, {}]", scenario.event_hour, self.history_start(), end),
            )?;
        }
        Ok(())
    }
}

/// A task paired with its observed future volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTask {
    pub task: PredictionTask,
    pub target: Vec<u32>,
}

impl LabeledTask {
    pub fn validate(&self) -> Result<(), ValidationError> {
        self.task.validate()?;
        ensure(self.target.len() == self.task.horizon, "target", || {
            format!(
                "length {} does not match horizon {}",
                self.target.len(),
                self.task.horizon
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub task_id: String,
    pub values: Vec<u32>,
    pub explanation: Option<String>,
    /// Verbatim backend output, kept so results can be re-parsed later.
    pub raw: String,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PredictionResult {
    pub fn validate(&self, horizon: usize) -> Result<(), ValidationError> {
        ensure(self.attempts >= 1, "attempts", || "must be >= 1".into())?;
        ensure(self.values.len() == horizon, "values", || {
            format!("length {} does not match horizon {horizon}", self.values.len())
        })
    }
}
