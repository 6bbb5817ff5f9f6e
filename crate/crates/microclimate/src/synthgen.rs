//! Deterministic synthetic farm scenarios: the ground-truth oracle used for
//! training demos, backtests and acceptance checks.
//!
//! A scenario builds three layers. A regional macro signal (seasonal cycle +
//! diurnal cycle + AR(1) noise) is what a distant commercial station can in
//! principle know. The local sensor truth adds a micro bias on top: a
//! constant offset, an elevation lapse offset, and a night cold-pool term
//! that switches on when wind drops below a threshold at night. The station
//! forecast is the macro signal plus a constant station bias plus noise whose
//! standard deviation grows linearly with horizon. Because the generator
//! keeps a hidden trace of the bias it injected, it can compute exact bounds:
//! the MAPE of using the station forecast as-is, and the MAPE of an ideal
//! model that knows the bias perfectly and is left with irreducible noise.

use chrono::Datelike;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_MAPE_EPSILON;
use crate::timeseries::{ChannelSpec, SensorReading, StationForecastRecord, Timestamp};

/// Sensor id attached to every generated reading.
pub const SENSOR_ID: &str = "sensor-1";

/// Full description of a synthetic farm scenario. Identical specs generate
/// bit-identical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmScenarioSpec {
    pub name: String,
    pub seed: u64,
    pub days: u32,
    pub resolution_seconds: u64,
    pub start: Timestamp,
    pub target: String,
    pub predictors: Vec<String>,
    /// Horizon offsets (in grid steps) the station forecast fans out over.
    pub horizons: Vec<usize>,

    // Macro components of the target channel.
    pub diurnal_amplitude: f64,
    pub seasonal_amplitude: f64,
    pub ar_coefficient: f64,
    pub ar_noise_std: f64,
    /// Observation noise on the target sensor.
    pub observation_noise_std: f64,

    // Micro bias: what the local sensor sees that the station cannot.
    pub bias_constant: f64,
    pub elevation_lapse_offset: f64,
    /// Added when wind is below the threshold at night.
    pub night_cold_pool_coefficient: f64,
    pub night_wind_threshold: f64,

    // Station forecast error model.
    pub station_bias: f64,
    /// Forecast noise std at horizon h is `h * forecast_noise_std_per_step`.
    pub forecast_noise_std_per_step: f64,
}

impl FarmScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.days < 14 {
            return Err(Error::InvalidArgument(format!(
                "scenario needs >= 14 days, got {}",
                self.days
            )));
        }
        if self.resolution_seconds == 0 || 86_400 % self.resolution_seconds != 0 {
            return Err(Error::InvalidArgument(
                "resolution must divide 86400 seconds".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return Err(Error::InvalidArgument("AR(1) coefficient must be in [0, 1)".into()));
        }
        for (label, v) in [
            ("ar_noise_std", self.ar_noise_std),
            ("observation_noise_std", self.observation_noise_std),
            ("forecast_noise_std_per_step", self.forecast_noise_std_per_step),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{label} must be >= 0")));
            }
        }
        if self.horizons.is_empty() || self.horizons[0] == 0 || self.horizons.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidArgument(
                "horizons must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if ChannelSpec::builtin(&self.target).is_none() {
            return Err(Error::InvalidArgument(format!("unknown target channel {}", self.target)));
        }
        for p in &self.predictors {
            if ChannelSpec::builtin(p).is_none() {
                return Err(Error::InvalidArgument(format!("unknown predictor channel {p}")));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        (self.days as u64 * 86_400 / self.resolution_seconds) as usize
    }
}

/// One grid cell of the hidden oracle trace (target channel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time: Timestamp,
    /// AR(1) component of the macro signal.
    pub ar: f64,
    /// Macro signal the station knows: seasonal + diurnal + AR.
    pub macro_value: f64,
    /// Injected micro bias at this cell.
    pub bias: f64,
    /// Sensor truth: macro + bias + observation noise.
    pub observed: f64,
}

/// Everything a scenario produces.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    pub spec: FarmScenarioSpec,
    pub readings: Vec<SensorReading>,
    pub forecasts: Vec<StationForecastRecord>,
    /// Test-only oracle trace; never an input to training.
    pub trace: Vec<TracePoint>,
}

/// MAPE bounds derived from the hidden trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleBounds {
    /// MAPE of using the station forecast directly.
    pub station_baseline_mape: f64,
    /// MAPE of a model that knows the injected bias perfectly; only the
    /// irreducible forecast and observation noise remains.
    pub ideal_model_mape: f64,
    pub points: usize,
    pub excluded: usize,
}

struct ChannelModel {
    base: f64,
    diurnal_amplitude: f64,
    /// Hour at which the diurnal sine crosses zero rising; peak is 6h later.
    diurnal_phase_hours: f64,
    seasonal_amplitude: f64,
    ar_coefficient: f64,
    ar_noise_std: f64,
    clamp: Option<(f64, f64)>,
}

fn channel_model(name: &str) -> ChannelModel {
    match name {
        "ambient_temperature" => ChannelModel {
            base: 15.0,
            diurnal_amplitude: 4.0,
            diurnal_phase_hours: 9.0,
            seasonal_amplitude: 4.0,
            ar_coefficient: 0.6,
            ar_noise_std: 0.8,
            clamp: None,
        },
        "ambient_humidity" => ChannelModel {
            base: 65.0,
            diurnal_amplitude: 10.0,
            diurnal_phase_hours: 21.0,
            seasonal_amplitude: 3.0,
            ar_coefficient: 0.5,
            ar_noise_std: 2.0,
            clamp: Some((2.0, 100.0)),
        },
        "precipitation" => ChannelModel {
            base: 0.0,
            diurnal_amplitude: 0.0,
            diurnal_phase_hours: 0.0,
            seasonal_amplitude: 0.0,
            ar_coefficient: 0.55,
            ar_noise_std: 1.3,
            clamp: Some((0.0, 200.0)),
        },
        "wind_speed" => ChannelModel {
            base: 3.2,
            diurnal_amplitude: 1.6,
            diurnal_phase_hours: 8.0,
            seasonal_amplitude: 0.4,
            ar_coefficient: 0.7,
            ar_noise_std: 0.8,
            clamp: Some((0.05, 60.0)),
        },
        "soil_moisture" => ChannelModel {
            base: 24.0,
            diurnal_amplitude: 0.6,
            diurnal_phase_hours: 21.0,
            seasonal_amplitude: 4.0,
            ar_coefficient: 0.9,
            ar_noise_std: 0.4,
            clamp: Some((1.0, 99.0)),
        },
        "soil_temperature" => ChannelModel {
            base: 12.0,
            diurnal_amplitude: 1.8,
            diurnal_phase_hours: 11.0,
            seasonal_amplitude: 5.0,
            ar_coefficient: 0.8,
            ar_noise_std: 0.3,
            clamp: Some((-30.0, 50.0)),
        },
        other => panic!("no channel model for {other}"),
    }
}

fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

fn seasonal_diurnal(time: Timestamp, diurnal_amp: f64, phase_hours: f64, seasonal_amp: f64) -> f64 {
    let secs = time.seconds();
    let hour = secs.rem_euclid(86_400) as f64 / 3_600.0;
    let date = chrono::DateTime::from_timestamp(secs, 0)
        .expect("timestamp in range")
        .date_naive();
    let year_len = if date.leap_year() { 366.0 } else { 365.0 };
    let doy_frac = date.ordinal0() as f64 / year_len;
    let diurnal = diurnal_amp * (std::f64::consts::TAU * (hour - phase_hours) / 24.0).sin();
    let seasonal = seasonal_amp * (std::f64::consts::TAU * (doy_frac - 0.28)).sin();
    diurnal + seasonal
}

fn is_night(time: Timestamp) -> bool {
    let hour = time.seconds().rem_euclid(86_400) / 3_600;
    !(6..20).contains(&hour)
}

/// Unclamped macro series for one channel over `cells` grid points.
fn macro_series(
    spec: &FarmScenarioSpec,
    channel: &str,
    cells: usize,
    precip: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let model = channel_model(channel);
    let is_target = channel == spec.target;
    let (diurnal_amp, seasonal_amp, ar_coeff, ar_std) = if is_target {
        (
            spec.diurnal_amplitude,
            spec.seasonal_amplitude,
            spec.ar_coefficient,
            spec.ar_noise_std,
        )
    } else {
        (
            model.diurnal_amplitude,
            model.seasonal_amplitude,
            model.ar_coefficient,
            model.ar_noise_std,
        )
    };
    let mut rng = stream(spec.seed, &format!("macro:{channel}"));
    let normal = StandardNormal;
    let mut ar = vec![0.0f64; cells];
    let mut value = vec![0.0f64; cells];
    let mut state = 0.0f64;
    // Exponentially weighted accumulation of recent precipitation drives
    // soil moisture.
    let mut wetness = 0.0f64;
    for t in 0..cells {
        let z: f64 = normal.sample(&mut rng);
        state = ar_coeff * state + ar_std * z;
        ar[t] = state;
        let time = Timestamp(spec.start.0 + t as i64 * spec.resolution_seconds as i64);
        let mut v = model.base + seasonal_diurnal(time, diurnal_amp, model.diurnal_phase_hours, seasonal_amp) + state;
        match channel {
            "precipitation" => v = (state - 1.2).max(0.0),
            "soil_moisture" => {
                if let Some(p) = precip {
                    wetness = 0.92 * wetness + p[t];
                    v += 0.6 * wetness;
                }
            }
            _ => {}
        }
        value[t] = v;
    }
    (value, ar)
}

fn clamp_channel(channel: &str, v: f64) -> f64 {
    match channel_model(channel).clamp {
        Some((lo, hi)) => v.clamp(lo, hi),
        None => v,
    }
}

/// Generate readings, station forecast records and the hidden truth trace.
pub fn generate(spec: &FarmScenarioSpec) -> Result<GeneratedScenario> {
    spec.validate()?;
    let cells = spec.cells();
    let max_h = *spec.horizons.last().expect("validated nonempty");
    // Macro values must extend past the grid so forecasts issued near (and
    // just after) the end of the observed data still have targets.
    let macro_cells = cells + max_h + 1;
    let step = spec.resolution_seconds;

    // Channel order is fixed so RNG consumption never depends on the
    // predictor list order.
    let mut exported: Vec<String> = spec.predictors.clone();
    if !exported.iter().any(|c| c == &spec.target) {
        exported.push(spec.target.clone());
    }

    let (precip, _) = macro_series(spec, "precipitation", macro_cells, None);
    let (wind, _) = macro_series(spec, "wind_speed", macro_cells, None);
    let mut series: std::collections::BTreeMap<String, Vec<f64>> = std::collections::BTreeMap::new();
    let mut target_ar = Vec::new();
    for channel in ["ambient_temperature", "ambient_humidity", "soil_temperature", "soil_moisture"] {
        let (values, ar) = macro_series(spec, channel, macro_cells, Some(&precip));
        if channel == spec.target {
            target_ar = ar;
        }
        series.insert(channel.to_string(), values);
    }
    series.insert("precipitation".to_string(), precip.clone());
    series.insert("wind_speed".to_string(), wind.clone());
    if spec.target == "precipitation" || spec.target == "wind_speed" {
        return Err(Error::InvalidArgument(format!(
            "{} is not supported as a target channel",
            spec.target
        )));
    }

    let target_macro = &series[&spec.target];

    // Micro bias per cell, from the true (unclamped) wind.
    let bias_at = |t: usize| -> f64 {
        let time = Timestamp(spec.start.0 + t as i64 * step as i64);
        let calm_night = is_night(time) && clamp_channel("wind_speed", wind[t]) < spec.night_wind_threshold;
        spec.bias_constant
            + spec.elevation_lapse_offset
            + if calm_night { spec.night_cold_pool_coefficient } else { 0.0 }
    };

    let mut obs_rng = stream(spec.seed, "observation:target");
    let normal = StandardNormal;
    let mut trace = Vec::with_capacity(cells);
    for t in 0..cells {
        let time = Timestamp(spec.start.0 + t as i64 * step as i64);
        let noise: f64 = normal.sample(&mut obs_rng);
        let bias = bias_at(t);
        let observed = target_macro[t] + bias + spec.observation_noise_std * noise;
        trace.push(TracePoint {
            time,
            ar: target_ar[t],
            macro_value: target_macro[t],
            bias,
            observed,
        });
    }

    let mut readings = Vec::new();
    for channel in &exported {
        let values = &series[channel];
        for t in 0..cells {
            let time = Timestamp(spec.start.0 + t as i64 * step as i64);
            let value = if channel == &spec.target {
                trace[t].observed
            } else {
                clamp_channel(channel, values[t])
            };
            readings.push(SensorReading {
                sensor_id: SENSOR_ID.to_string(),
                channel: channel.clone(),
                time,
                value,
            });
        }
    }

    // Station forecasts: dense issue cadence (every grid point, plus one
    // issue just past the observed data so live prediction has records).
    let mut fc_rng = stream(spec.seed, "forecast");
    let mut forecasts = Vec::with_capacity((cells + 1) * spec.horizons.len());
    for t in 0..=cells {
        let issue_time = Timestamp(spec.start.0 + t as i64 * step as i64);
        for &h in &spec.horizons {
            let z: f64 = normal.sample(&mut fc_rng);
            let noise = spec.forecast_noise_std_per_step * h as f64 * z;
            let value = target_macro[t + h] + spec.station_bias + noise;
            forecasts.push(StationForecastRecord {
                channel: spec.target.clone(),
                issue_time,
                valid_time: Timestamp(issue_time.0 + (h as u64 * step) as i64),
                value,
            });
        }
    }

    Ok(GeneratedScenario {
        spec: spec.clone(),
        readings,
        forecasts,
        trace,
    })
}

/// Brute-force the station-baseline MAPE and the ideal-model MAPE from the
/// hidden trace: for every forecast whose valid time has observed truth,
/// score the raw station value and the bias-corrected ideal value.
pub fn oracle_bounds(spec: &FarmScenarioSpec, generated: &GeneratedScenario) -> Result<OracleBounds> {
    let step = spec.resolution_seconds as i64;
    let mut station_acc = 0.0f64;
    let mut ideal_acc = 0.0f64;
    let mut points = 0usize;
    let mut excluded = 0usize;
    for fc in &generated.forecasts {
        let delta = fc.valid_time.0 - spec.start.0;
        if delta < 0 || delta % step != 0 {
            continue;
        }
        let vt = (delta / step) as usize;
        if vt >= generated.trace.len() {
            continue;
        }
        let truth = &generated.trace[vt];
        if truth.observed.abs() <= DEFAULT_MAPE_EPSILON {
            excluded += 1;
            continue;
        }
        let ideal = fc.value + truth.bias - spec.station_bias;
        station_acc += (fc.value - truth.observed).abs() / truth.observed.abs();
        ideal_acc += (ideal - truth.observed).abs() / truth.observed.abs();
        points += 1;
    }
    if points == 0 {
        return Err(Error::UndefinedMetric { excluded });
    }
    Ok(OracleBounds {
        station_baseline_mape: station_acc / points as f64 * 100.0,
        ideal_model_mape: ideal_acc / points as f64 * 100.0,
        points,
        excluded,
    })
}

const TRACE_COMMENT: &str = "# test-only oracle trace: records the injected micro bias; never an input to training";
const TRACE_HEADER: [&str; 5] = ["time_utc", "ar", "macro", "bias", "observed"];

/// Write the hidden trace as CSV, clearly marked test-only.
pub fn write_trace_csv(path: impl AsRef<std::path::Path>, trace: &[TracePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    text.push_str(TRACE_COMMENT);
    text.push('\n');
    text.push_str(&TRACE_HEADER.join(","));
    text.push('\n');
    for p in trace {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            p.time.to_rfc3339(),
            crate::csvio::format_value(p.ar),
            crate::csvio::format_value(p.macro_value),
            crate::csvio::format_value(p.bias),
            crate::csvio::format_value(p.observed),
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: impl AsRef<std::path::Path>) -> Result<Vec<TracePoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() || line == TRACE_HEADER.join(",") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::MalformedCsv {
            path: path.to_path_buf(),
            line: (i + 1) as u64,
            message: format!("bad trace row `{line}`"),
        };
        if fields.len() != 5 {
            return Err(bad());
        }
        out.push(TracePoint {
            time: Timestamp::parse_rfc3339(fields[0])?,
            ar: fields[1].parse().map_err(|_| bad())?,
            macro_value: fields[2].parse().map_err(|_| bad())?,
            bias: fields[3].parse().map_err(|_| bad())?,
            observed: fields[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

impl GeneratedScenario {
    /// Write `sensors.csv`, `forecasts.csv` and `hidden_trace.csv` under `dir`.
    pub fn write_csvs(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::csvio::write_sensor_csv(dir.join("sensors.csv"), &self.readings)?;
        crate::csvio::write_forecast_csv(dir.join("forecasts.csv"), &self.forecasts)?;
        write_trace_csv(dir.join("hidden_trace.csv"), &self.trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::scenario as preset;

    fn quiet_spec() -> FarmScenarioSpec {
        FarmScenarioSpec {
            name: "quiet".into(),
            seed: 7,
            days: 14,
            resolution_seconds: 21_600,
            start: Timestamp::parse_rfc3339("2024-03-01T00:00:00Z").unwrap(),
            target: "ambient_temperature".into(),
            predictors: vec!["ambient_temperature".into(), "wind_speed".into()],
            horizons: vec![1, 2, 4],
            diurnal_amplitude: 5.0,
            seasonal_amplitude: 3.0,
            ar_coefficient: 0.0,
            ar_noise_std: 0.0,
            observation_noise_std: 0.0,
            bias_constant: 0.0,
            elevation_lapse_offset: 0.0,
            night_cold_pool_coefficient: 0.0,
            night_wind_threshold: 0.0,
            station_bias: 0.0,
            forecast_noise_std_per_step: 0.0,
        }
    }

    #[test]
    fn degenerate_spec_forecast_equals_truth() {
        let gen = generate(&quiet_spec()).unwrap();
        let step = 21_600i64;
        for fc in &gen.forecasts {
            let vt = ((fc.valid_time.0 - gen.spec.start.0) / step) as usize;
            if vt < gen.trace.len() {
                assert_eq!(fc.value, gen.trace[vt].observed);
            }
        }
    }

    #[test]
    fn constant_bias_forces_constant_residual() {
        let mut spec = quiet_spec();
        spec.bias_constant = 1.5;
        let gen = generate(&spec).unwrap();
        let step = 21_600i64;
        let mut checked = 0;
        for fc in &gen.forecasts {
            let vt = ((fc.valid_time.0 - spec.start.0) / step) as usize;
            if vt < gen.trace.len() {
                let residual = gen.trace[vt].observed - fc.value;
                assert!((residual - 1.5).abs() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let spec = preset("temperature-6h").unwrap();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);

        let mut other = spec.clone();
        other.seed += 1;
        let c = generate(&other).unwrap();
        assert_ne!(a.readings, c.readings);
    }

    #[test]
    fn oracle_bounds_zero_noise_constant_bias() {
        let mut spec = quiet_spec();
        spec.bias_constant = 2.0;
        let gen = generate(&spec).unwrap();
        let bounds = oracle_bounds(&spec, &gen).unwrap();
        assert_eq!(bounds.ideal_model_mape, 0.0);
        assert!(bounds.station_baseline_mape > 0.0);
    }

    #[test]
    fn oracle_bounds_zero_bias_collapses_to_station() {
        let mut spec = quiet_spec();
        spec.ar_noise_std = 0.8;
        spec.ar_coefficient = 0.6;
        spec.observation_noise_std = 0.3;
        spec.forecast_noise_std_per_step = 0.05;
        let gen = generate(&spec).unwrap();
        let bounds = oracle_bounds(&spec, &gen).unwrap();
        assert_eq!(bounds.station_baseline_mape, bounds.ideal_model_mape);
    }

    // Double-computation oracle: an independent pass over the same data must
    // agree to 1e-12.
    #[test]
    fn oracle_bounds_match_independent_recomputation() {
        let spec = preset("temperature-6h").unwrap();
        let gen = generate(&spec).unwrap();
        let bounds = oracle_bounds(&spec, &gen).unwrap();

        let step = spec.resolution_seconds as i64;
        let by_time: std::collections::BTreeMap<i64, &TracePoint> =
            gen.trace.iter().map(|p| (p.time.0, p)).collect();
        let mut station = Vec::new();
        let mut ideal = Vec::new();
        for fc in &gen.forecasts {
            if (fc.valid_time.0 - spec.start.0) % step != 0 {
                continue;
            }
            if let Some(truth) = by_time.get(&fc.valid_time.0) {
                if truth.observed.abs() <= DEFAULT_MAPE_EPSILON {
                    continue;
                }
                station.push((fc.value - truth.observed).abs() / truth.observed.abs());
                ideal.push(
                    ((fc.value + truth.bias - spec.station_bias) - truth.observed).abs()
                        / truth.observed.abs(),
                );
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64 * 100.0;
        assert!((bounds.station_baseline_mape - mean(&station)).abs() < 1e-12);
        assert!((bounds.ideal_model_mape - mean(&ideal)).abs() < 1e-12);
        assert_eq!(bounds.points, station.len());
    }

    // Statistical sanity: lag-1 autocorrelation of the AR component stays
    // near the configured coefficient over a long scenario.
    #[test]
    fn empirical_ar_coefficient_tracks_the_spec() {
        let spec = preset("temperature-6h").unwrap();
        assert!(spec.days >= 60);
        let gen = generate(&spec).unwrap();
        let ar: Vec<f64> = gen.trace.iter().map(|p| p.ar).collect();
        let n = ar.len();
        let mean = ar.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..n {
            let d = ar[t] - mean;
            den += d * d;
            if t + 1 < n {
                num += d * (ar[t + 1] - mean);
            }
        }
        let rho = num / den;
        assert!(
            (rho - spec.ar_coefficient).abs() < 0.1,
            "empirical {rho} vs spec {}",
            spec.ar_coefficient
        );
    }

    #[test]
    fn night_cold_pool_only_fires_on_calm_nights() {
        let mut spec = quiet_spec();
        spec.night_cold_pool_coefficient = -3.0;
        spec.night_wind_threshold = 2.5;
        let gen = generate(&spec).unwrap();
        let mut fired = 0;
        for p in &gen.trace {
            assert!(p.bias == 0.0 || p.bias == -3.0);
            if p.bias == -3.0 {
                assert!(is_night(p.time));
                fired += 1;
            }
        }
        assert!(fired > 0, "threshold never triggered in two weeks");
    }

    #[test]
    fn trace_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gen = generate(&quiet_spec()).unwrap();
        let path = dir.path().join("hidden_trace.csv");
        write_trace_csv(&path, &gen.trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# test-only"));
        let back = read_trace_csv(&path).unwrap();
        assert_eq!(back.len(), gen.trace.len());
        for (a, b) in gen.trace.iter().zip(&back) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.bias.to_bits(), b.bias.to_bits());
            assert_eq!(a.observed.to_bits(), b.observed.to_bits());
        }
    }

    #[test]
    fn short_scenarios_are_rejected() {
        let mut spec = quiet_spec();
        spec.days = 5;
        assert_eq!(generate(&spec).unwrap_err().class(), "invalid-argument");
    }
}
