//! Shipped scenario presets, mirroring the three deployment patterns the
//! toolkit targets: multi-day temperature guidance for spray planning,
//! fourth-day soil moisture for phenotyping plots, and next-12-hours
//! humidity for grain-tank fan control.

use crate::decompose::warmup_len;
use crate::error::{Error, Result};
use crate::forecaster::ModelConfig;
use crate::synthgen::FarmScenarioSpec;
use crate::timeseries::Timestamp;

/// A scenario plus the model configuration tuned for it.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub scenario: FarmScenarioSpec,
    pub model: ModelConfig,
}

impl Preset {
    /// Alignment window: feature window plus decomposition warm-up.
    pub fn align_window(&self) -> usize {
        self.model.window + warmup_len(self.model.levels)
    }
}

pub const PRESET_NAMES: [&str; 3] = ["temperature-6h", "soil-moisture-6h", "humidity-1h"];

fn scenario_start() -> Timestamp {
    Timestamp::parse_rfc3339("2024-03-01T00:00:00Z").expect("fixed epoch")
}

/// Look up a shipped preset.
pub fn by_name(name: &str) -> Result<Preset> {
    match name {
        // Six-day temperature guidance at 6 h resolution (horizons 6..120 h).
        // The micro bias is a cold offset plus a night cold pool under calm
        // wind — the classic frost trap a valley station never sees.
        "temperature-6h" => {
            let horizons: Vec<usize> = (1..=20).collect();
            Ok(Preset {
                name: "temperature-6h",
                scenario: FarmScenarioSpec {
                    name: "temperature-6h".into(),
                    seed: 42,
                    days: 60,
                    resolution_seconds: 21_600,
                    start: scenario_start(),
                    target: "ambient_temperature".into(),
                    predictors: vec![
                        "ambient_temperature".into(),
                        "ambient_humidity".into(),
                        "precipitation".into(),
                        "wind_speed".into(),
                    ],
                    horizons: horizons.clone(),
                    diurnal_amplitude: 5.0,
                    seasonal_amplitude: 3.0,
                    ar_coefficient: 0.6,
                    ar_noise_std: 0.8,
                    observation_noise_std: 0.3,
                    bias_constant: -1.0,
                    elevation_lapse_offset: -0.5,
                    night_cold_pool_coefficient: -3.0,
                    night_wind_threshold: 2.5,
                    station_bias: 1.5,
                    forecast_noise_std_per_step: 0.06,
                },
                model: ModelConfig::scale_mlp(8, horizons, 2).with_seed(42),
            })
        }
        // Fourth-day soil moisture at 6 h resolution, with
        // precipitation-driven dynamics in the target channel.
        "soil-moisture-6h" => {
            let horizons: Vec<usize> = (1..=16).collect();
            Ok(Preset {
                name: "soil-moisture-6h",
                scenario: FarmScenarioSpec {
                    name: "soil-moisture-6h".into(),
                    seed: 42,
                    days: 60,
                    resolution_seconds: 21_600,
                    start: scenario_start(),
                    target: "soil_moisture".into(),
                    predictors: vec![
                        "ambient_temperature".into(),
                        "ambient_humidity".into(),
                        "precipitation".into(),
                        "wind_speed".into(),
                        "soil_moisture".into(),
                        "soil_temperature".into(),
                    ],
                    horizons: horizons.clone(),
                    diurnal_amplitude: 0.8,
                    seasonal_amplitude: 3.0,
                    ar_coefficient: 0.9,
                    ar_noise_std: 0.5,
                    observation_noise_std: 0.4,
                    bias_constant: 2.0,
                    elevation_lapse_offset: -1.0,
                    night_cold_pool_coefficient: 0.0,
                    night_wind_threshold: 2.5,
                    station_bias: 2.5,
                    forecast_noise_std_per_step: 0.05,
                },
                model: ModelConfig::scale_mlp(8, horizons, 2).with_seed(42),
            })
        }
        // Twelfth-hour humidity at 1 h resolution for fan control.
        "humidity-1h" => {
            let horizons: Vec<usize> = (1..=12).collect();
            Ok(Preset {
                name: "humidity-1h",
                scenario: FarmScenarioSpec {
                    name: "humidity-1h".into(),
                    seed: 42,
                    days: 35,
                    resolution_seconds: 3_600,
                    start: scenario_start(),
                    target: "ambient_humidity".into(),
                    predictors: vec![
                        "ambient_temperature".into(),
                        "ambient_humidity".into(),
                        "precipitation".into(),
                        "wind_speed".into(),
                    ],
                    horizons: horizons.clone(),
                    diurnal_amplitude: 10.0,
                    seasonal_amplitude: 3.0,
                    ar_coefficient: 0.85,
                    ar_noise_std: 1.2,
                    observation_noise_std: 0.8,
                    bias_constant: -4.0,
                    elevation_lapse_offset: 1.0,
                    night_cold_pool_coefficient: 6.0,
                    night_wind_threshold: 2.0,
                    station_bias: 3.0,
                    forecast_noise_std_per_step: 0.15,
                },
                model: ModelConfig::scale_mlp(24, horizons, 3).with_seed(42),
            })
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Convenience: the scenario spec of a shipped preset.
pub fn scenario(name: &str) -> Result<FarmScenarioSpec> {
    Ok(by_name(name)?.scenario)
}

/// A source/target farm pair that differ by a constant micro-bias shift:
/// the source has plenty of data, the target is scarce. Used to exercise
/// transfer adaptation.
pub fn transfer_pair() -> (FarmScenarioSpec, FarmScenarioSpec) {
    let base = by_name("temperature-6h").expect("shipped preset").scenario;
    let source = FarmScenarioSpec {
        name: "transfer-source".into(),
        ..base.clone()
    };
    let target = FarmScenarioSpec {
        name: "transfer-target".into(),
        seed: 4242,
        days: 30,
        bias_constant: -4.5,
        elevation_lapse_offset: 0.5,
        ..base
    };
    (source, target)
}
