use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::inference::{BackendParams, BatchOptions};
use crate::ingest::{DatasetConfig, DatasetInputs};
use crate::model::PromptOptions;

/// History lengths accepted without `allow_nonstandard_windows`.
pub const STANDARD_H_IN: [usize; 3] = [4, 8, 12];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub flow_dir: Option<PathBuf>,
    pub sensors: Option<PathBuf>,
    pub poi: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub holidays: Option<PathBuf>,
    pub bucket_table: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub request_timeout_secs: f64,
    pub parallelism: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let params = BackendParams::default();
        let batch = BatchOptions::default();
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "default".into(),
            temperature: params.temperature,
            max_new_tokens: params.max_new_tokens,
            request_timeout_secs: params.request_timeout.as_secs_f64(),
            parallelism: batch.parallelism,
            max_retries: batch.max_retries,
            backoff_ms: batch.backoff.as_millis() as u64,
        }
    }
}

impl BackendConfig {
    pub fn params(&self) -> BackendParams {
        BackendParams {
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            request_timeout: Duration::try_from_secs_f64(self.request_timeout_secs).unwrap_or(Duration::from_secs(120)),
        }
    }

    pub fn batch(&self) -> BatchOptions {
        BatchOptions {
            parallelism: self.parallelism,
            max_retries: self.max_retries,
            backoff: Duration::from_millis(self.backoff_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Permits history lengths other than 4, 8 or 12 and horizons other than 12.
    pub allow_nonstandard_windows: bool,
    pub data: DataPaths,
    pub dataset: DatasetConfig,
    /// Replaces each task's own prompt options when set.
    pub prompt: Option<PromptOptions>,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            allow_nonstandard_windows: false,
            data: DataPaths::default(),
            dataset: DatasetConfig::default(),
            prompt: None,
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unprintable config: {e}\n"))
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let d = &self.data;
        let paths = [
            ("data.flow_dir", &d.flow_dir),
            ("data.sensors", &d.sensors),
            ("data.poi", &d.poi),
            ("data.weather", &d.weather),
            ("data.holidays", &d.holidays),
            ("data.bucket_table", &d.bucket_table),
            ("data.templates", &d.templates),
        ];
        for (name, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    errs.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        if let Err(e) = self.dataset.validate() {
            errs.extend(e.into_iter().map(|m| format!("dataset: {m}")));
        }
        if !self.allow_nonstandard_windows {
            if !STANDARD_H_IN.contains(&self.dataset.h_in) {
                errs.push(format!(
                    "dataset.h_in {} must be one of 4, 8, 12 (set allow_nonstandard_windows to override)",
                    self.dataset.h_in
                ));
            }
            if self.dataset.horizon != 12 {
                errs.push(format!(
                    "dataset.horizon {} must be 12 (set allow_nonstandard_windows to override)",
                    self.dataset.horizon
                ));
            }
        }
        if let Err(e) = self.backend.params().validate() {
            errs.push(format!("backend: {e}"));
        }
        if !(self.backend.request_timeout_secs.is_finite() && self.backend.request_timeout_secs > 0.0) {
            errs.push("backend.request_timeout_secs must be > 0".into());
        }
        if self.backend.parallelism == 0 {
            errs.push("backend.parallelism must be >= 1".into());
        }
        if self.backend.kind == BackendKind::Http && self.backend.endpoint.as_deref().unwrap_or("").is_empty() {
            errs.push("backend.endpoint is required for the http backend".into());
        }
        if let Some(p) = &self.prompt {
            if p.explanation_mode && p.few_shot_explanations == 0 {
                errs.push("prompt.few_shot_explanations must be >= 1 in explanation mode".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Inputs for dataset building; lists the missing required paths.
    pub fn dataset_inputs(&self) -> Result<DatasetInputs, Vec<String>> {
        let d = &self.data;
        let mut missing = Vec::new();
        let mut need = |name: &str, p: &Option<PathBuf>| {
            if p.is_none() {
                missing.push(format!("{name} is required for build-dataset"));
            }
            p.clone().unwrap_or_default()
        };
        let flow_dir = need("data.flow_dir", &d.flow_dir);
        let sensors_file = need("data.sensors", &d.sensors);
        let weather_file = need("data.weather", &d.weather);
        if !missing.is_empty() {
            return Err(missing);
        }
        Ok(DatasetInputs {
            flow_dir,
            sensors_file,
            poi_file: d.poi.clone(),
            weather_file,
            bucket_table: d.bucket_table.clone(),
            holidays: d.holidays.clone(),
        })
    }
}
