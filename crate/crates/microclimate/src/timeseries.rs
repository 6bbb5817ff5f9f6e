//! Canonical time-series representations: timestamps, channels, sensor
//! readings, uniform grids, resampling and gap filling.

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds since the Unix epoch, UTC only.
///
/// Every external timestamp is converted to UTC at the parse boundary;
/// local-time rendering is a presentation concern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn seconds(self) -> i64 {
        self.0
    }

    /// Parse an RFC 3339 timestamp (any offset) and normalize to UTC.
    pub fn parse_rfc3339(text: &str) -> Result<Self> {
        let dt = DateTime::parse_from_rfc3339(text)
            .map_err(|e| Error::InvalidArgument(format!("bad timestamp `{text}`: {e}")))?;
        Ok(Timestamp(dt.with_timezone(&Utc).timestamp()))
    }

    /// Render as RFC 3339 with a trailing `Z`.
    pub fn to_rfc3339(self) -> String {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .expect("timestamp in representable range")
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn add_steps(self, steps: i64, step_seconds: u64) -> Self {
        Timestamp(self.0 + steps * step_seconds as i64)
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

/// A climatic channel: identifier, unit and the plausible value range used to
/// reject bogus sensor readings at ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub unit: String,
    pub plausible_min: f64,
    pub plausible_max: f64,
}

impl ChannelSpec {
    pub fn new(name: &str, unit: &str, plausible_min: f64, plausible_max: f64) -> Result<Self> {
        if plausible_min >= plausible_max {
            return Err(Error::InvalidArgument(format!(
                "channel {name}: plausible_min {plausible_min} must be < plausible_max {plausible_max}"
            )));
        }
        Ok(ChannelSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            plausible_min,
            plausible_max,
        })
    }

    /// Built-in channel vocabulary used by the presets, the ingest validator
    /// and the scenario generator.
    pub fn builtin(name: &str) -> Option<ChannelSpec> {
        let (unit, lo, hi) = match name {
            "ambient_temperature" => ("°C", -40.0, 60.0),
            "ambient_humidity" => ("%RH", 0.0, 100.0),
            "precipitation" => ("mm", 0.0, 200.0),
            "wind_speed" => ("m/s", 0.0, 60.0),
            "soil_moisture" => ("% VWC", 0.0, 100.0),
            "soil_temperature" => ("°C", -30.0, 50.0),
            _ => return None,
        };
        Some(ChannelSpec {
            name: name.to_string(),
            unit: unit.to_string(),
            plausible_min: lo,
            plausible_max: hi,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        value.is_finite() && value >= self.plausible_min && value <= self.plausible_max
    }
}

/// One raw measurement from one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor_id: String,
    pub channel: String,
    pub time: Timestamp,
    pub value: f64,
}

/// A provider forecast keyed by (issue time, valid time, channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationForecastRecord {
    pub channel: String,
    pub issue_time: Timestamp,
    pub valid_time: Timestamp,
    pub value: f64,
}

impl StationForecastRecord {
    pub fn horizon_seconds(&self) -> i64 {
        self.valid_time.0 - self.issue_time.0
    }
}

/// Regularly sampled, validity-masked series for one channel.
///
/// `values[i]` belongs to the grid cell starting at `start + i*step`. Cells
/// with `valid[i] == false` hold a placeholder 0.0 that model math never
/// consumes (enforced by the alignment window preconditions and tested by
/// mutating masked cells).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSeries {
    pub channel: String,
    pub start: Timestamp,
    pub step_seconds: u64,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl UniformSeries {
    pub fn new(
        channel: &str,
        start: Timestamp,
        step_seconds: u64,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if step_seconds == 0 {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        if values.len() != valid.len() {
            return Err(Error::InvalidArgument(format!(
                "values/valid length mismatch: {} vs {}",
                values.len(),
                valid.len()
            )));
        }
        Ok(UniformSeries {
            channel: channel.to_string(),
            start,
            step_seconds,
            values,
            valid,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Timestamp of the cell at `index`.
    pub fn time_at(&self, index: usize) -> Timestamp {
        Timestamp(self.start.0 + index as i64 * self.step_seconds as i64)
    }

    /// Grid index of `time`, if it falls exactly on the grid (in range).
    pub fn index_of(&self, time: Timestamp) -> Option<usize> {
        let delta = time.0 - self.start.0;
        if delta < 0 || delta % self.step_seconds as i64 != 0 {
            return None;
        }
        let idx = (delta / self.step_seconds as i64) as usize;
        (idx < self.len()).then_some(idx)
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// True when cells `[end_index - count, end_index)` all exist and are valid.
    pub fn trailing_valid(&self, end_index: usize, count: usize) -> bool {
        end_index <= self.len() && end_index >= count && self.valid[end_index - count..end_index].iter().all(|&v| v)
    }
}

/// Result of [`resample_uniform`]: the gridded series plus the count of
/// readings rejected by the plausibility range.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub series: UniformSeries,
    pub out_of_range: usize,
}

/// Average irregular, unordered, possibly duplicated readings onto a uniform
/// grid. Cell `k` covers `[start + k*step, start + (k+1)*step)` and takes the
/// arithmetic mean of the readings that fall in it; empty cells are invalid.
pub fn resample_uniform(
    readings: &[SensorReading],
    channel: &ChannelSpec,
    start: Timestamp,
    step_seconds: u64,
    end: Timestamp,
) -> Result<Resampled> {
    if step_seconds == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if end <= start {
        return Err(Error::InvalidArgument(format!(
            "empty grid: end {end} must be after start {start}"
        )));
    }
    let span = (end.0 - start.0) as u64;
    let cells = span.div_ceil(step_seconds) as usize;
    let mut sums = vec![0.0f64; cells];
    let mut counts = vec![0usize; cells];
    let mut out_of_range = 0usize;
    for r in readings {
        if r.channel != channel.name {
            continue;
        }
        if !channel.contains(r.value) {
            out_of_range += 1;
            continue;
        }
        let delta = r.time.0 - start.0;
        if delta < 0 {
            continue;
        }
        let cell = (delta / step_seconds as i64) as usize;
        if cell >= cells {
            continue;
        }
        sums[cell] += r.value;
        counts[cell] += 1;
    }
    let mut values = vec![0.0f64; cells];
    let mut valid = vec![false; cells];
    for k in 0..cells {
        if counts[k] > 0 {
            values[k] = sums[k] / counts[k] as f64;
            valid[k] = true;
        }
    }
    Ok(Resampled {
        series: UniformSeries {
            channel: channel.name.clone(),
            start,
            step_seconds,
            values,
            valid,
        },
        out_of_range,
    })
}

/// Linearly interpolate interior invalid runs of length `<= max_gap_steps`
/// that are bounded by valid cells on both sides. Longer runs and runs that
/// touch either boundary stay invalid: long outages are not invented.
pub fn fill_gaps(series: &UniformSeries, max_gap_steps: usize) -> UniformSeries {
    let mut out = series.clone();
    let n = out.len();
    let mut i = 0usize;
    while i < n {
        if out.valid[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && !out.valid[i] {
            i += 1;
        }
        let run_end = i; // exclusive
        let run_len = run_end - run_start;
        let has_left = run_start > 0;
        let has_right = run_end < n;
        if has_left && has_right && run_len <= max_gap_steps {
            let left = out.values[run_start - 1];
            let right = out.values[run_end];
            let denom = (run_len + 1) as f64;
            for (j, cell) in (run_start..run_end).enumerate() {
                let t = (j + 1) as f64 / denom;
                out.values[cell] = left + (right - left) * t;
                out.valid[cell] = true;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ChannelSpec {
        ChannelSpec::builtin("ambient_temperature").unwrap()
    }

    fn reading(t: i64, value: f64) -> SensorReading {
        SensorReading {
            sensor_id: "s1".into(),
            channel: "ambient_temperature".into(),
            time: Timestamp(t),
            value,
        }
    }

    #[test]
    fn resample_takes_cell_mean() {
        let readings = vec![reading(0, 1.0), reading(600, 2.0), reading(1200, 3.0)];
        let out = resample_uniform(&readings, &spec(), Timestamp(0), 1800, Timestamp(1800)).unwrap();
        assert_eq!(out.series.values, vec![2.0]);
        assert_eq!(out.series.valid, vec![true]);
        assert_eq!(out.out_of_range, 0);
    }

    #[test]
    fn resample_marks_empty_cells_invalid() {
        let readings = vec![reading(0, 5.0)];
        let out = resample_uniform(&readings, &spec(), Timestamp(0), 100, Timestamp(300)).unwrap();
        assert_eq!(out.series.valid, vec![true, false, false]);
    }

    #[test]
    fn resample_excludes_and_counts_out_of_range() {
        let readings = vec![reading(0, 5.0), reading(10, 500.0), reading(20, f64::NAN)];
        let out = resample_uniform(&readings, &spec(), Timestamp(0), 100, Timestamp(100)).unwrap();
        assert_eq!(out.out_of_range, 2);
        assert_eq!(out.series.values, vec![5.0]);
    }

    #[test]
    fn resample_rejects_empty_grid() {
        let err = resample_uniform(&[], &spec(), Timestamp(100), 60, Timestamp(100)).unwrap_err();
        assert_eq!(err.class(), "invalid-argument");
    }

    #[test]
    fn resample_handles_unordered_duplicates() {
        let readings = vec![reading(50, 4.0), reading(10, 2.0), reading(50, 4.0)];
        let out = resample_uniform(&readings, &spec(), Timestamp(0), 100, Timestamp(100)).unwrap();
        assert!((out.series.values[0] - 10.0 / 3.0).abs() < 1e-12);
    }

    // Brute-force oracle: independent per-cell mean recomputation over a
    // large random batch must match the implementation exactly.
    #[test]
    fn resample_matches_per_cell_mean_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let start = Timestamp(1_000_000);
        let step = 600u64;
        let end = Timestamp(1_000_000 + 600 * 50);
        let mut readings = Vec::new();
        for _ in 0..10_000 {
            let t = rng.random_range(start.0 - 1200..end.0 + 1200);
            let v = rng.random_range(-35.0..55.0);
            readings.push(reading(t, v));
        }
        let out = resample_uniform(&readings, &spec(), start, step, end).unwrap();

        for cell in 0..out.series.len() {
            let lo = start.0 + cell as i64 * step as i64;
            let hi = lo + step as i64;
            let in_cell: Vec<f64> = readings
                .iter()
                .filter(|r| r.time.0 >= lo && r.time.0 < hi)
                .map(|r| r.value)
                .collect();
            if in_cell.is_empty() {
                assert!(!out.series.valid[cell]);
            } else {
                let mean: f64 = in_cell.iter().sum::<f64>() / in_cell.len() as f64;
                assert!(out.series.valid[cell]);
                assert_eq!(out.series.values[cell], mean, "cell {cell}");
            }
        }
    }

    fn series(values: Vec<f64>, valid: Vec<bool>) -> UniformSeries {
        UniformSeries::new("ambient_temperature", Timestamp(0), 60, values, valid).unwrap()
    }

    #[test]
    fn fill_gaps_interpolates_short_interior_run() {
        let s = series(vec![1.0, 0.0, 3.0], vec![true, false, true]);
        let filled = fill_gaps(&s, 1);
        assert_eq!(filled.values, vec![1.0, 2.0, 3.0]);
        assert!(filled.all_valid());
    }

    #[test]
    fn fill_gaps_leaves_long_runs_invalid() {
        let s = series(vec![1.0, 0.0, 0.0, 4.0], vec![true, false, false, true]);
        let filled = fill_gaps(&s, 1);
        assert_eq!(filled.valid, vec![true, false, false, true]);

        let filled2 = fill_gaps(&s, 2);
        assert_eq!(filled2.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert!(filled2.all_valid());
    }

    #[test]
    fn fill_gaps_leaves_boundary_runs_invalid() {
        let s = series(vec![0.0, 2.0, 0.0], vec![false, true, false]);
        let filled = fill_gaps(&s, 5);
        assert_eq!(filled.valid, vec![false, true, false]);
    }

    #[test]
    fn resample_then_fill_is_identity_on_uniform_valid_data() {
        let values = vec![3.5, -1.25, 7.0, 0.0, 2.5];
        let readings: Vec<SensorReading> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| reading(k as i64 * 300, v))
            .collect();
        let out = resample_uniform(&readings, &spec(), Timestamp(0), 300, Timestamp(1500)).unwrap();
        let filled = fill_gaps(&out.series, 3);
        assert_eq!(filled.values, values);
        assert!(filled.all_valid());
    }

    #[test]
    fn timestamp_round_trips_rfc3339_and_normalizes_offsets() {
        let t = Timestamp::parse_rfc3339("2024-04-07T06:30:00+02:00").unwrap();
        assert_eq!(t.to_rfc3339(), "2024-04-07T04:30:00Z");
        let back = Timestamp::parse_rfc3339(&t.to_rfc3339()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn channel_spec_requires_ordered_range() {
        assert!(ChannelSpec::new("x", "u", 5.0, 5.0).is_err());
    }
}
