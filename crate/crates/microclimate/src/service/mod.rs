//! Operational configuration and the HTTP/JSON serving layer.

pub mod http;
pub mod store;

use std::path::{Path, PathBuf};

use crate::decompose::warmup_len;
use crate::error::{Error, Result};
use crate::forecaster::ModelConfig;
use crate::pipeline::{DatasetParams, DEFAULT_MAX_GAP_STEPS};
use crate::presets;

/// Which forecast source the service and CLI use.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderChoice {
    /// Read the documented forecast CSV (path defaults to
    /// `<data_dir>/forecasts.csv`).
    File,
    /// Generate records from a shipped scenario preset.
    Simulated { preset: String },
}

/// Application configuration: a flat key=value file, overridden by
/// environment variables (`MICROCLIMATE_DATA_DIR`, `MICROCLIMATE_MODEL_DIR`,
/// `MICROCLIMATE_BIND`), overridden by CLI flags. Flags win.
#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub bind: String,
    pub sensor_id: String,
    pub provider: ProviderChoice,
    pub forecast_csv: Option<PathBuf>,
    pub max_gap_steps: usize,

    /// Scenario selection: a preset name, or the explicit fields below.
    pub preset: Option<String>,
    pub target: Option<String>,
    pub predictors: Vec<String>,
    pub resolution_seconds: Option<u64>,
    pub horizons: Vec<usize>,
    /// Feature window (trailing steps per band).
    pub window: Option<usize>,
    pub levels: Option<usize>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            data_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            bind: "127.0.0.1:8337".to_string(),
            sensor_id: crate::synthgen::SENSOR_ID.to_string(),
            provider: ProviderChoice::File,
            forecast_csv: None,
            max_gap_steps: DEFAULT_MAX_GAP_STEPS,
            preset: None,
            target: None,
            predictors: Vec::new(),
            resolution_seconds: None,
            horizons: Vec::new(),
            window: None,
            levels: None,
        }
    }
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    parse_list(value)
        .iter()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("{key}: `{s}` is not an integer")))
        })
        .collect()
}

impl AppConfig {
    /// Parse the flat key=value config format. Lines starting with `#` and
    /// blank lines are ignored; unknown keys are errors.
    pub fn parse(text: &str) -> Result<AppConfig> {
        let mut config = AppConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad_int = || Error::Config(format!("line {}: {key} must be an integer", i + 1));
            match key {
                "data_dir" => config.data_dir = PathBuf::from(value),
                "model_dir" => config.model_dir = PathBuf::from(value),
                "bind" => config.bind = value.to_string(),
                "sensor_id" => config.sensor_id = value.to_string(),
                "provider" => {
                    config.provider = match value.split_once(':') {
                        None if value == "file" => ProviderChoice::File,
                        Some(("simulated", preset)) => ProviderChoice::Simulated {
                            preset: preset.to_string(),
                        },
                        _ => {
                            return Err(Error::Config(format!(
                                "line {}: provider must be `file` or `simulated:<preset>`",
                                i + 1
                            )))
                        }
                    }
                }
                "forecast_csv" => config.forecast_csv = Some(PathBuf::from(value)),
                "max_gap_steps" => config.max_gap_steps = value.parse().map_err(|_| bad_int())?,
                "preset" => config.preset = Some(value.to_string()),
                "target" => config.target = Some(value.to_string()),
                "predictors" => config.predictors = parse_list(value),
                "resolution_seconds" => {
                    config.resolution_seconds = Some(value.parse().map_err(|_| bad_int())?)
                }
                "horizons" => config.horizons = parse_usize_list(key, value)?,
                "window" => config.window = Some(value.parse().map_err(|_| bad_int())?),
                "levels" => config.levels = Some(value.parse().map_err(|_| bad_int())?),
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", i + 1))),
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<AppConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        AppConfig::parse(&text)
    }

    /// Environment overrides for the bind address and directories.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("MICROCLIMATE_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("MICROCLIMATE_MODEL_DIR") {
            self.model_dir = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("MICROCLIMATE_BIND") {
            self.bind = v;
        }
    }

    pub fn forecast_csv_path(&self) -> PathBuf {
        self.forecast_csv
            .clone()
            .unwrap_or_else(|| self.data_dir.join("forecasts.csv"))
    }

    /// Default decomposition depth for a resolution: three levels at hourly
    /// data, two at coarser steps, so the coarsest band spans roughly one
    /// diurnal cycle.
    pub fn default_levels(resolution_seconds: u64) -> usize {
        if resolution_seconds <= 3_600 {
            3
        } else {
            2
        }
    }

    /// Resolve the scenario selection into dataset parameters and a model
    /// configuration. Presets resolve whole; explicit fields require target,
    /// predictors, resolution and horizons.
    pub fn resolve_pipeline(&self) -> Result<(DatasetParams, ModelConfig)> {
        if let Some(name) = &self.preset {
            let preset = presets::by_name(name)?;
            return Ok((DatasetParams::from_preset(&preset), preset.model));
        }
        let target = self
            .target
            .clone()
            .ok_or_else(|| Error::Config("either `preset` or `target` must be set".into()))?;
        if self.predictors.is_empty() {
            return Err(Error::Config("explicit scenarios need `predictors`".into()));
        }
        let resolution = self
            .resolution_seconds
            .ok_or_else(|| Error::Config("explicit scenarios need `resolution_seconds`".into()))?;
        if self.horizons.is_empty() {
            return Err(Error::Config("explicit scenarios need `horizons`".into()));
        }
        let levels = self.levels.unwrap_or_else(|| Self::default_levels(resolution));
        let window = self.window.unwrap_or(8);
        let model = ModelConfig::scale_mlp(window, self.horizons.clone(), levels);
        let params = DatasetParams {
            target,
            predictors: self.predictors.clone(),
            resolution_seconds: resolution,
            window: window + warmup_len(levels),
            horizons: self.horizons.clone(),
            max_gap_steps: self.max_gap_steps,
        };
        Ok((params, model))
    }
}
