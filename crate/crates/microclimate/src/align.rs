//! Alignment of sensor series with station forecasts into supervised rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{StationForecastRecord, Timestamp, UniformSeries};

/// Why candidate issue times were skipped during alignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// A predictor window contained an invalid cell.
    pub invalid_history: usize,
    /// No station forecast record for at least one horizon.
    pub missing_forecast: usize,
    /// The target was invalid at at least one horizon cell.
    pub invalid_actual: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.invalid_history + self.missing_forecast + self.invalid_actual
    }
}

impl std::fmt::Display for SkipCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "invalid_history={} missing_forecast={} invalid_actual={}",
            self.invalid_history, self.missing_forecast, self.invalid_actual
        )
    }
}

/// One supervised example: everything known at `issue_time` plus the future
/// target values the model is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRow {
    /// Grid index of the issue time.
    pub issue_index: usize,
    pub issue_time: Timestamp,
    /// Per predictor channel: the `window` cells ending just before the
    /// issue time (oldest first).
    pub history: Vec<Vec<f64>>,
    /// Station forecast per horizon, in horizon order.
    pub station: Vec<f64>,
    /// Actual target value at issue_time + h, per horizon.
    pub actual: Vec<f64>,
}

/// Aligned supervised dataset for one target channel.
///
/// Rows reference the shared uniform grid; the full predictor and target
/// series are retained so feature building can decompose each predictor
/// history once and baselines can read the target at issue time.
#[derive(Debug, Clone)]
pub struct AlignedDataset {
    pub target: String,
    pub resolution_seconds: u64,
    pub start: Timestamp,
    pub window: usize,
    /// Horizon offsets in grid steps, strictly increasing.
    pub horizons: Vec<usize>,
    pub predictor_channels: Vec<String>,
    pub predictors: Vec<UniformSeries>,
    pub target_series: UniformSeries,
    pub rows: Vec<AlignedRow>,
    pub skipped: SkipCounts,
    /// Forecast records that re-issued an existing (issue, valid) key; the
    /// last parsed record won.
    pub duplicate_forecasts: usize,
}

impl AlignedDataset {
    pub fn horizon_count(&self) -> usize {
        self.horizons.len()
    }

    /// A dataset covering only `rows[range]`, sharing the underlying series.
    pub fn with_rows(&self, rows: Vec<AlignedRow>) -> AlignedDataset {
        AlignedDataset {
            rows,
            ..self.clone()
        }
    }

    /// Target value at a row's issue time, if that cell is valid.
    pub fn target_at_issue(&self, row: &AlignedRow) -> Option<f64> {
        self.target_series
            .valid
            .get(row.issue_index)
            .copied()
            .unwrap_or(false)
            .then(|| self.target_series.values[row.issue_index])
    }
}

fn check_grid(target: &UniformSeries, predictors: &[UniformSeries]) -> Result<()> {
    for p in predictors {
        if p.start != target.start || p.step_seconds != target.step_seconds {
            return Err(Error::InvalidArgument(format!(
                "predictor {} grid ({}, step {}s) differs from target grid ({}, step {}s)",
                p.channel, p.start, p.step_seconds, target.start, target.step_seconds
            )));
        }
        if p.len() != target.len() {
            return Err(Error::InvalidArgument(format!(
                "predictor {} has {} cells, target has {}",
                p.channel,
                p.len(),
                target.len()
            )));
        }
    }
    Ok(())
}

fn check_horizons(horizons: &[usize]) -> Result<()> {
    if horizons.is_empty() {
        return Err(Error::InvalidArgument("horizons must be nonempty".into()));
    }
    for pair in horizons.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidArgument(
                "horizons must be strictly increasing".into(),
            ));
        }
    }
    if horizons[0] == 0 {
        return Err(Error::InvalidArgument("horizons must be positive".into()));
    }
    Ok(())
}

/// Index forecast records by (issue, valid) seconds, last parsed wins.
/// Returns the map and the number of overwritten duplicates.
pub fn index_forecasts(
    records: &[StationForecastRecord],
    channel: &str,
) -> (BTreeMap<(i64, i64), f64>, usize) {
    let mut map = BTreeMap::new();
    let mut duplicates = 0usize;
    for r in records {
        if r.channel != channel {
            continue;
        }
        if map.insert((r.issue_time.0, r.valid_time.0), r.value).is_some() {
            duplicates += 1;
        }
    }
    (map, duplicates)
}

/// Build the supervised dataset.
///
/// A row is emitted for every issue index `t` (grid time `start + t*step`)
/// where (a) the `window` cells before `t` are valid in every predictor,
/// (b) a station forecast exists for every horizon, and (c) the target is
/// valid at `t + h` for every horizon. Rows failing a condition are counted
/// under the first failing reason.
pub fn align(
    target_series: &UniformSeries,
    predictor_series: &[UniformSeries],
    forecasts: &[StationForecastRecord],
    window: usize,
    horizons: &[usize],
) -> Result<AlignedDataset> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    if predictor_series.is_empty() {
        return Err(Error::InvalidArgument("at least one predictor series required".into()));
    }
    check_horizons(horizons)?;
    check_grid(target_series, predictor_series)?;

    let (forecast_map, duplicate_forecasts) = index_forecasts(forecasts, &target_series.channel);

    let n = target_series.len();
    let step = target_series.step_seconds;
    let max_h = *horizons.last().expect("nonempty");
    let mut rows = Vec::new();
    let mut skipped = SkipCounts::default();

    if n > max_h {
        for t in window..=(n - 1 - max_h) {
            let issue_time = target_series.time_at(t);
            if !predictor_series.iter().all(|p| p.trailing_valid(t, window)) {
                skipped.invalid_history += 1;
                continue;
            }
            let mut station = Vec::with_capacity(horizons.len());
            let mut missing = false;
            for &h in horizons {
                let valid_time = issue_time.add_steps(h as i64, step);
                match forecast_map.get(&(issue_time.0, valid_time.0)) {
                    Some(&v) => station.push(v),
                    None => {
                        missing = true;
                        break;
                    }
                }
            }
            if missing {
                skipped.missing_forecast += 1;
                continue;
            }
            if !horizons.iter().all(|&h| target_series.valid[t + h]) {
                skipped.invalid_actual += 1;
                continue;
            }
            let actual: Vec<f64> = horizons.iter().map(|&h| target_series.values[t + h]).collect();
            let history: Vec<Vec<f64>> = predictor_series
                .iter()
                .map(|p| p.values[t - window..t].to_vec())
                .collect();
            rows.push(AlignedRow {
                issue_index: t,
                issue_time,
                history,
                station,
                actual,
            });
        }
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset(skipped));
    }

    Ok(AlignedDataset {
        target: target_series.channel.clone(),
        resolution_seconds: step,
        start: target_series.start,
        window,
        horizons: horizons.to_vec(),
        predictor_channels: predictor_series.iter().map(|p| p.channel.clone()).collect(),
        predictors: predictor_series.to_vec(),
        target_series: target_series.clone(),
        rows,
        skipped,
        duplicate_forecasts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_series(channel: &str, n: usize, value: f64) -> UniformSeries {
        UniformSeries::new(channel, Timestamp(0), 3600, vec![value; n], vec![true; n]).unwrap()
    }

    fn dense_forecasts(channel: &str, n: usize, horizons: &[usize], value: f64) -> Vec<StationForecastRecord> {
        let mut out = Vec::new();
        for t in 0..n {
            for &h in horizons {
                out.push(StationForecastRecord {
                    channel: channel.into(),
                    issue_time: Timestamp(t as i64 * 3600),
                    valid_time: Timestamp((t + h) as i64 * 3600),
                    value,
                });
            }
        }
        out
    }

    #[test]
    fn row_count_on_fully_valid_inputs() {
        let target = flat_series("ambient_temperature", 100, 10.0);
        let wind = flat_series("wind_speed", 100, 3.0);
        let forecasts = dense_forecasts("ambient_temperature", 100, &[1, 2], 9.0);
        let ds = align(&target, &[target.clone(), wind], &forecasts, 4, &[1, 2]).unwrap();
        assert_eq!(ds.rows.len(), 94);
        assert_eq!(ds.rows.first().unwrap().issue_index, 4);
        assert_eq!(ds.rows.last().unwrap().issue_index, 97);
        assert_eq!(ds.skipped.total(), 0);
    }

    #[test]
    fn missing_forecast_drops_exactly_one_row() {
        let target = flat_series("ambient_temperature", 100, 10.0);
        let mut forecasts = dense_forecasts("ambient_temperature", 100, &[1, 2], 9.0);
        forecasts.retain(|r| !(r.issue_time.0 == 50 * 3600 && r.valid_time.0 == 51 * 3600));
        let ds = align(&target, &[target.clone()], &forecasts, 4, &[1, 2]).unwrap();
        assert_eq!(ds.rows.len(), 93);
        assert_eq!(ds.skipped.missing_forecast, 1);
        assert!(ds.rows.iter().all(|r| r.issue_index != 50));
    }

    #[test]
    fn invalid_future_target_drops_rows_whose_horizon_hits_it() {
        let mut target = flat_series("ambient_temperature", 100, 10.0);
        target.valid[60] = false;
        let forecasts = dense_forecasts("ambient_temperature", 100, &[1, 2], 9.0);
        let ds = align(&target, &[target.clone()], &forecasts, 4, &[1, 2]).unwrap();
        // Issues 58 (h=2) and 59 (h=1) hit cell 60. Issue 60 itself loses its
        // history window because cell 60 is also a history cell for t=61..64.
        assert!(ds.rows.iter().all(|r| r.issue_index != 58 && r.issue_index != 59));
        assert_eq!(ds.skipped.invalid_actual, 2);
    }

    #[test]
    fn empty_result_reports_skip_reasons() {
        let target = flat_series("ambient_temperature", 20, 10.0);
        // No forecasts at all.
        let err = align(&target, &[target.clone()], &[], 4, &[1]).unwrap_err();
        match err {
            Error::EmptyDataset(skips) => {
                assert_eq!(skips.missing_forecast, 15);
                assert_eq!(skips.total(), 15);
            }
            other => panic!("expected empty-dataset, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_forecast_records_last_wins() {
        let target = flat_series("ambient_temperature", 10, 10.0);
        let mut forecasts = dense_forecasts("ambient_temperature", 10, &[1], 5.0);
        forecasts.push(StationForecastRecord {
            channel: "ambient_temperature".into(),
            issue_time: Timestamp(4 * 3600),
            valid_time: Timestamp(5 * 3600),
            value: 99.0,
        });
        let ds = align(&target, &[target.clone()], &forecasts, 2, &[1]).unwrap();
        assert_eq!(ds.duplicate_forecasts, 1);
        let row = ds.rows.iter().find(|r| r.issue_index == 4).unwrap();
        assert_eq!(row.station, vec![99.0]);
    }

    #[test]
    fn history_never_reads_at_or_after_issue_time() {
        let target = flat_series("ambient_temperature", 60, 10.0);
        let forecasts = dense_forecasts("ambient_temperature", 60, &[1, 3], 9.0);
        let baseline = align(&target, &[target.clone()], &forecasts, 5, &[1, 3]).unwrap();

        // Corrupt every predictor value from index 30 onward; rows issued at
        // t <= 30 must be bit-identical (their actuals change, so compare
        // history blocks and station vectors only).
        let mut mutated = target.clone();
        for i in 30..mutated.len() {
            mutated.values[i] += 1000.0;
        }
        let after = align(&mutated, &[mutated.clone()], &forecasts, 5, &[1, 3]).unwrap();
        for (a, b) in baseline.rows.iter().zip(after.rows.iter()) {
            if a.issue_index <= 30 {
                assert_eq!(a.history, b.history, "issue {}", a.issue_index);
                assert_eq!(a.station, b.station);
            }
        }
    }

    // Property: row count equals a brute-force enumeration over all issue
    // times on random validity masks.
    #[test]
    fn row_count_matches_brute_force_on_random_masks() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 80;
            let window = rng.random_range(1..6);
            let horizons = vec![1usize, rng.random_range(2..5)];
            let mut target = flat_series("ambient_temperature", n, 10.0);
            let mut wind = flat_series("wind_speed", n, 3.0);
            for i in 0..n {
                target.valid[i] = rng.random_range(0.0..1.0) > 0.15;
                wind.valid[i] = rng.random_range(0.0..1.0) > 0.15;
            }
            let mut forecasts = dense_forecasts("ambient_temperature", n, &horizons, 9.0);
            forecasts.retain(|_| rng.random_range(0.0..1.0) > 0.05);
            let predictors = vec![target.clone(), wind.clone()];

            let got = match align(&target, &predictors, &forecasts, window, &horizons) {
                Ok(ds) => ds.rows.len(),
                Err(Error::EmptyDataset(_)) => 0,
                Err(e) => panic!("unexpected error: {e}"),
            };

            let (map, _) = index_forecasts(&forecasts, "ambient_temperature");
            let max_h = *horizons.last().unwrap();
            let mut expect = 0usize;
            for t in 0..n {
                if t < window || t + max_h > n - 1 {
                    continue;
                }
                let hist_ok = predictors
                    .iter()
                    .all(|p| (t - window..t).all(|i| p.valid[i]));
                let fc_ok = horizons
                    .iter()
                    .all(|&h| map.contains_key(&(t as i64 * 3600, (t + h) as i64 * 3600)));
                let act_ok = horizons.iter().all(|&h| target.valid[t + h]);
                if hist_ok && fc_ok && act_ok {
                    expect += 1;
                }
            }
            assert_eq!(got, expect, "trial {trial}");
        }
    }
}
