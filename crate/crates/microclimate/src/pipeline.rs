//! Glue from raw files to supervised datasets. The CLI, the HTTP service,
//! the examples and the tests all build grids through these functions, so a
//! replayed stream lands on exactly the grid a batch run would use.

use crate::align::{align, AlignedDataset};
use crate::error::{Error, Result};
use crate::timeseries::{
    fill_gaps, resample_uniform, ChannelSpec, SensorReading, StationForecastRecord, Timestamp,
    UniformSeries,
};

/// Interpolation cap: longer outages are not invented by interpolation.
pub const DEFAULT_MAX_GAP_STEPS: usize = 3;

/// Everything needed to turn readings + forecasts into an aligned dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetParams {
    pub target: String,
    pub predictors: Vec<String>,
    pub resolution_seconds: u64,
    /// Alignment window (feature window plus decomposition warm-up).
    pub window: usize,
    pub horizons: Vec<usize>,
    pub max_gap_steps: usize,
}

impl DatasetParams {
    pub fn from_preset(preset: &crate::presets::Preset) -> DatasetParams {
        DatasetParams {
            target: preset.scenario.target.clone(),
            predictors: preset.scenario.predictors.clone(),
            resolution_seconds: preset.scenario.resolution_seconds,
            window: preset.align_window(),
            horizons: preset.model.horizons.clone(),
            max_gap_steps: DEFAULT_MAX_GAP_STEPS,
        }
    }
}

/// The uniform grid spanned by a batch of readings: start is the beginning
/// of the cell containing the earliest reading, end exclusive of the cell
/// containing the latest.
pub fn grid_bounds(readings: &[SensorReading], step_seconds: u64) -> Result<(Timestamp, Timestamp)> {
    let min = readings.iter().map(|r| r.time.0).min();
    let max = readings.iter().map(|r| r.time.0).max();
    match (min, max) {
        (Some(lo), Some(hi)) => {
            let step = step_seconds as i64;
            let start = lo.div_euclid(step) * step;
            let end = hi.div_euclid(step) * step + step;
            Ok((Timestamp(start), Timestamp(end)))
        }
        _ => Err(Error::InvalidArgument("no readings".into())),
    }
}

fn channel_spec(name: &str) -> Result<ChannelSpec> {
    ChannelSpec::builtin(name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{name}`")))
}

/// Resample and gap-fill one series per requested channel onto a shared grid.
pub fn build_series(
    readings: &[SensorReading],
    channels: &[String],
    start: Timestamp,
    step_seconds: u64,
    end: Timestamp,
    max_gap_steps: usize,
) -> Result<Vec<UniformSeries>> {
    channels
        .iter()
        .map(|name| {
            let spec = channel_spec(name)?;
            let resampled = resample_uniform(readings, &spec, start, step_seconds, end)?;
            Ok(fill_gaps(&resampled.series, max_gap_steps))
        })
        .collect()
}

/// Full path from raw readings and forecast records to an aligned dataset.
pub fn align_readings(
    readings: &[SensorReading],
    forecasts: &[StationForecastRecord],
    params: &DatasetParams,
) -> Result<AlignedDataset> {
    let (start, end) = grid_bounds(readings, params.resolution_seconds)?;
    let predictors = build_series(
        readings,
        &params.predictors,
        start,
        params.resolution_seconds,
        end,
        params.max_gap_steps,
    )?;
    let target = match predictors.iter().find(|s| s.channel == params.target) {
        Some(series) => series.clone(),
        None => build_series(
            readings,
            std::slice::from_ref(&params.target),
            start,
            params.resolution_seconds,
            end,
            params.max_gap_steps,
        )?
        .remove(0),
    };
    align(&target, &predictors, forecasts, params.window, &params.horizons)
}

/// Predict at the newest admissible issue time: starting from the grid
/// boundary after the last filled cell, walk back up to `lookback` steps
/// until history and station records line up. Returns the first success or
/// the error from the newest candidate.
pub fn predict_latest(
    bundle: &crate::forecaster::ModelBundle,
    readings: &[SensorReading],
    forecasts: &[StationForecastRecord],
    max_gap_steps: usize,
    lookback: usize,
) -> Result<crate::forecaster::ForecastResult> {
    let step = bundle.resolution_seconds;
    let (start, end) = grid_bounds(readings, step)?;
    let series = build_series(readings, &bundle.predictor_channels, start, step, end, max_gap_steps)?;
    let mut newest_err = None;
    for k in 0..lookback.max(1) {
        let issue = Timestamp(end.0 - (k as u64 * step) as i64);
        match crate::forecaster::predict(bundle, &series, issue, forecasts) {
            Ok(result) => return Ok(result),
            Err(e) => {
                if newest_err.is_none() {
                    newest_err = Some(e);
                }
            }
        }
    }
    Err(newest_err.expect("at least one candidate attempted"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::synthgen::generate;

    #[test]
    fn grid_bounds_snap_to_the_step() {
        let mk = |t: i64| SensorReading {
            sensor_id: "s1".into(),
            channel: "ambient_temperature".into(),
            time: Timestamp(t),
            value: 1.0,
        };
        let (start, end) = grid_bounds(&[mk(3700), mk(7300)], 3600).unwrap();
        assert_eq!(start, Timestamp(3600));
        assert_eq!(end, Timestamp(10800));
        assert!(grid_bounds(&[], 3600).is_err());
    }

    #[test]
    fn preset_scenario_aligns_end_to_end() {
        let preset = presets::by_name("temperature-6h").unwrap();
        let gen = generate(&preset.scenario).unwrap();
        let params = DatasetParams::from_preset(&preset);
        let ds = align_readings(&gen.readings, &gen.forecasts, &params).unwrap();
        // Dense scenario: every issue index from `window` onward aligns until
        // actuals run out.
        let expected = preset.scenario.cells() - params.window - *params.horizons.last().unwrap();
        assert_eq!(ds.rows.len(), expected);
        assert_eq!(ds.skipped.total(), 0);
        assert_eq!(ds.predictor_channels, preset.scenario.predictors);
    }

    #[test]
    fn unknown_channels_are_rejected() {
        let readings = vec![SensorReading {
            sensor_id: "s1".into(),
            channel: "bogus".into(),
            time: Timestamp(0),
            value: 1.0,
        }];
        let err = build_series(&readings, &["bogus".into()], Timestamp(0), 60, Timestamp(120), 3)
            .unwrap_err();
        assert_eq!(err.class(), "invalid-argument");
    }
}
