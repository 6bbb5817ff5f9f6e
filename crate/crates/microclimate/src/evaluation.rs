//! Metrics (RMSE, MAPE, accuracy), rolling-origin backtesting with baselines,
//! and figure-data emission.
//!
//! Accuracy follows the percentage convention `accuracy = 100 - MAPE`, as an
//! identity rather than an approximation. MAPE carries an explicit near-zero
//! guard: points whose actual magnitude is at or below `epsilon` are excluded
//! and counted instead of silently exploding the mean.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::AlignedDataset;
use crate::error::{Error, Result};
use crate::forecaster::{predict_rows, train, ModelBundle, ModelConfig};
use crate::timeseries::Timestamp;

/// Default near-zero guard for MAPE, in channel units.
pub const DEFAULT_MAPE_EPSILON: f64 = 0.5;

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "metric needs equal nonzero lengths, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("metric inputs must be finite".into()));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let acc: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let d = a - p;
            d * d
        })
        .sum();
    Ok((acc / actual.len() as f64).sqrt())
}

/// MAPE with the near-zero exclusion count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    pub mape: f64,
    pub excluded: usize,
}

/// Mean absolute percentage error over points with `|actual| > epsilon`.
pub fn mape(actual: &[f64], predicted: &[f64], epsilon: f64) -> Result<Mape> {
    check_lengths(actual, predicted)?;
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if a.abs() > epsilon {
            acc += (a - p).abs() / a.abs();
            used += 1;
        }
    }
    let excluded = actual.len() - used;
    if used == 0 {
        return Err(Error::UndefinedMetric { excluded });
    }
    Ok(Mape {
        mape: acc / used as f64 * 100.0,
        excluded,
    })
}

/// One metric row: either a single horizon or the pooled overall line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    /// None for the pooled overall line.
    pub horizon_steps: Option<usize>,
    pub rmse: f64,
    pub mape: f64,
    /// Always exactly `100 - mape`.
    pub accuracy: f64,
    pub excluded: usize,
    pub points: usize,
}

pub fn metric_line(
    horizon_steps: Option<usize>,
    actual: &[f64],
    predicted: &[f64],
    epsilon: f64,
) -> Result<MetricLine> {
    let r = rmse(actual, predicted)?;
    let m = mape(actual, predicted, epsilon)?;
    Ok(MetricLine {
        horizon_steps,
        rmse: r,
        mape: m.mape,
        accuracy: 100.0 - m.mape,
        excluded: m.excluded,
        points: actual.len(),
    })
}

/// Per-horizon metric lines plus the pooled overall line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub overall: MetricLine,
    pub per_horizon: Vec<MetricLine>,
    /// Rows that could not be scored by this predictor (e.g. a persistence
    /// anchor that was invalid at issue time).
    pub skipped_rows: usize,
}

/// Build a [`MetricSet`] from `(actuals, predictions)` pairs, one per horizon.
pub fn metric_set_per_horizon(
    horizons: &[usize],
    pairs: &[(Vec<f64>, Vec<f64>)],
    epsilon: f64,
    skipped_rows: usize,
) -> Result<MetricSet> {
    let mut per_horizon = Vec::with_capacity(pairs.len());
    let mut all_actual = Vec::new();
    let mut all_pred = Vec::new();
    for (&h, (actual, pred)) in horizons.iter().zip(pairs) {
        per_horizon.push(metric_line(Some(h), actual, pred, epsilon)?);
        all_actual.extend_from_slice(actual);
        all_pred.extend_from_slice(pred);
    }
    Ok(MetricSet {
        overall: metric_line(None, &all_actual, &all_pred, epsilon)?,
        per_horizon,
        skipped_rows,
    })
}

/// One scored (issue time, horizon) point from a backtest: everything needed
/// to recompute any pooled metric from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub issue_time: Timestamp,
    pub horizon_steps: usize,
    pub valid_time: Timestamp,
    pub actual: f64,
    pub station: f64,
    pub model: f64,
    /// Value observed at issue time; None when that cell was invalid.
    pub persistence: Option<f64>,
}

/// Rolling-origin fold layout: the first `initial_train_fraction` of rows is
/// always training data; the remainder splits into `folds` contiguous test
/// spans, each trained on everything before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub folds: usize,
    pub initial_train_fraction: f64,
}

impl Default for FoldSpec {
    fn default() -> Self {
        FoldSpec {
            folds: 3,
            initial_train_fraction: 0.5,
        }
    }
}

/// The training procedure a backtest runs per fold.
pub trait BacktestTrainer {
    fn train_fold(&self, train: &AlignedDataset, fold: usize) -> Result<ModelBundle>;
}

/// The standard procedure: train with this config, fold index mixed into the
/// seed so folds are independent but the whole backtest stays deterministic.
impl BacktestTrainer for ModelConfig {
    fn train_fold(&self, data: &AlignedDataset, fold: usize) -> Result<ModelBundle> {
        train(data, &self.clone().with_seed(self.seed.wrapping_add(fold as u64)))
    }
}

/// Full evaluation report: model metrics plus the station and persistence
/// baselines computed on identical pooled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: String,
    pub resolution_seconds: u64,
    pub horizons: Vec<usize>,
    pub epsilon: f64,
    pub folds: usize,
    pub rows_evaluated: usize,
    pub period_start: Timestamp,
    pub period_end: Timestamp,
    pub model: MetricSet,
    pub station: MetricSet,
    pub persistence: MetricSet,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("unreadable report: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Backtest output: the report, the per-point dump it was pooled from, and
/// the per-fold bundles.
#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub report: EvalReport,
    pub points: Vec<PredictionPoint>,
    pub bundles: Vec<ModelBundle>,
}

/// Pool per-point predictions into an [`EvalReport`].
pub fn report_from_points(
    target: &str,
    resolution_seconds: u64,
    horizons: &[usize],
    points: &[PredictionPoint],
    epsilon: f64,
    folds: usize,
    rows_evaluated: usize,
) -> Result<EvalReport> {
    let mut by_horizon: BTreeMap<usize, Vec<&PredictionPoint>> = BTreeMap::new();
    for p in points {
        by_horizon.entry(p.horizon_steps).or_default().push(p);
    }
    let mut model_pairs = Vec::new();
    let mut station_pairs = Vec::new();
    let mut persistence_pairs = Vec::new();
    for &h in horizons {
        let pts = by_horizon.get(&h).map(|v| v.as_slice()).unwrap_or(&[]);
        let actual: Vec<f64> = pts.iter().map(|p| p.actual).collect();
        model_pairs.push((actual.clone(), pts.iter().map(|p| p.model).collect()));
        station_pairs.push((actual, pts.iter().map(|p| p.station).collect()));
        let anchored: Vec<&&PredictionPoint> = pts.iter().filter(|p| p.persistence.is_some()).collect();
        persistence_pairs.push((
            anchored.iter().map(|p| p.actual).collect(),
            anchored.iter().map(|p| p.persistence.unwrap()).collect(),
        ));
    }
    let skipped = points.iter().filter(|p| p.persistence.is_none()).count() / horizons.len().max(1);
    let period_start = points.iter().map(|p| p.issue_time).min().unwrap_or(Timestamp(0));
    let period_end = points.iter().map(|p| p.valid_time).max().unwrap_or(Timestamp(0));
    Ok(EvalReport {
        target: target.to_string(),
        resolution_seconds,
        horizons: horizons.to_vec(),
        epsilon,
        folds,
        rows_evaluated,
        period_start,
        period_end,
        model: metric_set_per_horizon(horizons, &model_pairs, epsilon, 0)?,
        station: metric_set_per_horizon(horizons, &station_pairs, epsilon, 0)?,
        persistence: metric_set_per_horizon(horizons, &persistence_pairs, epsilon, skipped)?,
    })
}

/// Rolling-origin backtest: chronological train→test folds that never mix
/// future into past, pooled per-horizon metrics across folds, and station /
/// persistence baselines on the identical pooled points.
pub fn rolling_backtest(
    trainer: &dyn BacktestTrainer,
    dataset: &AlignedDataset,
    spec: FoldSpec,
    epsilon: f64,
) -> Result<BacktestOutcome> {
    if spec.folds < 2 {
        return Err(Error::InvalidArgument("backtest needs >= 2 folds".into()));
    }
    if !(0.0 < spec.initial_train_fraction && spec.initial_train_fraction < 1.0) {
        return Err(Error::InvalidArgument(
            "initial_train_fraction must be in (0, 1)".into(),
        ));
    }
    let n = dataset.rows.len();
    let cut = (n as f64 * spec.initial_train_fraction).floor() as usize;
    let test_total = n - cut;
    let base = test_total / spec.folds;
    let rem = test_total % spec.folds;

    let mut points = Vec::new();
    let mut bundles = Vec::new();
    let mut span_start = cut;
    let mut rows_evaluated = 0usize;
    for fold in 0..spec.folds {
        let span_len = base + usize::from(fold < rem);
        if span_len == 0 {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} has an empty test span ({test_total} test rows over {} folds)",
                spec.folds
            )));
        }
        let span_end = span_start + span_len;
        let train_ds = dataset.with_rows(dataset.rows[..span_start].to_vec());
        let bundle = trainer.train_fold(&train_ds, fold)?;

        let test_ds = dataset.with_rows(dataset.rows[span_start..span_end].to_vec());
        let predictions = predict_rows(&bundle, &test_ds)?;
        for (ri, forecast) in predictions {
            let row = &test_ds.rows[ri];
            let anchor = test_ds.target_at_issue(row);
            for (hi, hf) in forecast.horizons.iter().enumerate() {
                points.push(PredictionPoint {
                    issue_time: row.issue_time,
                    horizon_steps: hf.horizon_steps,
                    valid_time: hf.valid_time,
                    actual: row.actual[hi],
                    station: row.station[hi],
                    model: hf.predicted_value,
                    persistence: anchor,
                });
            }
            rows_evaluated += 1;
        }
        bundles.push(bundle);
        span_start = span_end;
    }

    let report = report_from_points(
        &dataset.target,
        dataset.resolution_seconds,
        &dataset.horizons,
        &points,
        epsilon,
        spec.folds,
        rows_evaluated,
    )?;
    Ok(BacktestOutcome {
        report,
        points,
        bundles,
    })
}

/// One row of the plotting CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub valid_time: Timestamp,
    pub actual: f64,
    pub station_forecast: f64,
    pub model_prediction: f64,
    pub horizon: usize,
}

const FIGURE_HEADER: [&str; 5] = [
    "valid_time",
    "actual",
    "station_forecast",
    "model_prediction",
    "horizon",
];

/// Render scored points as the three-line comparison CSV
/// (`valid_time, actual, station_forecast, model_prediction, horizon`).
pub fn emit_figure_data(points: &[PredictionPoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FIGURE_HEADER).expect("in-memory write");
    for p in points {
        w.write_record([
            p.valid_time.to_rfc3339(),
            crate::csvio::format_value(p.actual),
            crate::csvio::format_value(p.station),
            crate::csvio::format_value(p.model),
            p.horizon_steps.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

pub fn write_figure_csv(path: impl AsRef<Path>, points: &[PredictionPoint]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, emit_figure_data(points)).map_err(|e| Error::io(path, e))
}

pub fn parse_figure_csv(text: &str) -> Result<Vec<FigureRow>> {
    let path = Path::new("figure.csv");
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<&str> = rdr
        .headers()
        .map_err(|e| Error::Config(e.to_string()))?
        .iter()
        .collect();
    if header != FIGURE_HEADER {
        return Err(Error::MalformedCsv {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::MalformedCsv {
                path: path.to_path_buf(),
                line,
                message: format!("bad number `{}`", &rec[i]),
            })
        };
        out.push(FigureRow {
            valid_time: Timestamp::parse_rfc3339(&rec[0])?,
            actual: field(1)?,
            station_forecast: field(2)?,
            model_prediction: field(3)?,
            horizon: rec[4].parse().map_err(|_| Error::MalformedCsv {
                path: path.to_path_buf(),
                line,
                message: format!("bad horizon `{}`", &rec[4]),
            })?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_matches_hand_computation() {
        let v = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((v - 3.5355339).abs() < 1e-6, "got {v}");
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn rmse_rejects_mismatched_lengths() {
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]).unwrap_err().class(), "invalid-argument");
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn mape_excludes_near_zero_actuals() {
        let m = mape(&[10.0, 20.0], &[9.0, 22.0], 0.5).unwrap();
        assert_eq!(m.mape, 10.0);
        assert_eq!(m.excluded, 0);

        let err = mape(&[0.1], &[5.0], 0.5).unwrap_err();
        match err {
            Error::UndefinedMetric { excluded } => assert_eq!(excluded, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn accuracy_is_exactly_one_hundred_minus_mape() {
        // The reported convention: a 5.09% MAPE is a 94.91% accuracy.
        let line = metric_line(None, &[100.0], &[105.09], 0.5).unwrap();
        assert!((line.mape - 5.09).abs() < 1e-9);
        assert_eq!(line.accuracy, 100.0 - line.mape);
    }

    // Metric oracle: brute-force recomputation on random vectors matches to
    // 1e-12.
    #[test]
    fn metrics_match_brute_force_recomputation() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let n = rng.random_range(5..200);
            let actual: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
            let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();

            let mut sq = 0.0;
            for i in 0..n {
                sq += (actual[i] - pred[i]) * (actual[i] - pred[i]);
            }
            let want_rmse = (sq / n as f64).sqrt();
            assert!((rmse(&actual, &pred).unwrap() - want_rmse).abs() < 1e-12);

            let eps = 0.5;
            let mut acc = 0.0;
            let mut used = 0;
            for i in 0..n {
                if actual[i].abs() > eps {
                    acc += (actual[i] - pred[i]).abs() / actual[i].abs();
                    used += 1;
                }
            }
            if used > 0 {
                let want = acc / used as f64 * 100.0;
                let got = mape(&actual, &pred, eps).unwrap();
                assert!((got.mape - want).abs() < 1e-12);
                assert_eq!(got.excluded, n - used);
            }
        }
    }

    #[test]
    fn excluded_plus_included_covers_all_points() {
        let actual = vec![0.1, 10.0, 0.2, 5.0, 0.0];
        let pred = vec![1.0; 5];
        let m = mape(&actual, &pred, 0.5).unwrap();
        assert_eq!(m.excluded + 2, actual.len());
    }

    fn sample_points() -> Vec<PredictionPoint> {
        (0..24)
            .map(|h| PredictionPoint {
                issue_time: Timestamp(0),
                horizon_steps: h + 1,
                valid_time: Timestamp((h as i64 + 1) * 21600),
                actual: 10.0 + h as f64,
                station: 12.0 + h as f64,
                model: 10.5 + h as f64,
                persistence: Some(10.0),
            })
            .collect()
    }

    #[test]
    fn figure_csv_has_one_row_per_horizon_of_an_issue_series() {
        // A six-day sequence at six-hour resolution is 24 horizons.
        let text = emit_figure_data(&sample_points());
        let rows = parse_figure_csv(&text).unwrap();
        assert_eq!(rows.len(), 24);
    }

    #[test]
    fn figure_csv_round_trips_exactly() {
        let points = sample_points();
        let text = emit_figure_data(&points);
        let rows = parse_figure_csv(&text).unwrap();
        for (p, r) in points.iter().zip(&rows) {
            assert_eq!(r.valid_time, p.valid_time);
            assert_eq!(r.actual.to_bits(), p.actual.to_bits());
            assert_eq!(r.station_forecast.to_bits(), p.station.to_bits());
            assert_eq!(r.model_prediction.to_bits(), p.model.to_bits());
            assert_eq!(r.horizon, p.horizon_steps);
        }
    }

    #[test]
    fn report_pooling_matches_brute_force_from_the_dump() {
        let points = sample_points();
        let horizons: Vec<usize> = (1..=24).collect();
        let report =
            report_from_points("ambient_temperature", 21600, &horizons, &points, 0.5, 2, 1).unwrap();

        let actual: Vec<f64> = points.iter().map(|p| p.actual).collect();
        let model: Vec<f64> = points.iter().map(|p| p.model).collect();
        let want = rmse(&actual, &model).unwrap();
        assert!((report.model.overall.rmse - want).abs() < 1e-12);
        let want_mape = mape(&actual, &model, 0.5).unwrap().mape;
        assert!((report.model.overall.mape - want_mape).abs() < 1e-12);
        assert_eq!(report.model.overall.accuracy, 100.0 - report.model.overall.mape);
    }
}
