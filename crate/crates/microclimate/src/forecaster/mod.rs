//! Residual (forecast-error) model: per-scale feature construction,
//! training, multi-horizon prediction and the station/persistence baselines.
//!
//! The model never predicts the climate variable directly. It learns the
//! error `e(t,h) = actual(t+h) - station_forecast(t,h)` and reports
//! `prediction = station_forecast + predicted_error`, so an untrained (or
//! deliberately zeroed) model degrades to the station forecast instead of
//! nonsense.

mod bundle;
pub mod net;

pub use bundle::{ModelBundle, TrainSummary, BUNDLE_SCHEMA_VERSION};

use chrono::Datelike;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::AlignedDataset;
use crate::decompose::{decompose_causal, warmup_len};
use crate::error::{Error, Result};
use crate::evaluation::{metric_set_per_horizon, MetricSet};
use crate::timeseries::{StationForecastRecord, Timestamp, UniformSeries};

/// Model architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One affine map from features to the horizon outputs.
    Linear,
    /// Per-band affine encoders, one tanh hidden layer, affine head.
    ScaleMlp,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Architecture::Linear => f.write_str("linear"),
            Architecture::ScaleMlp => f.write_str("scale_mlp"),
        }
    }
}

/// Training and feature hyperparameters. The validation split is always the
/// chronologically last fraction of the rows; a random split would leak
/// future information into training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Trailing steps per band fed to the model.
    pub window: usize,
    /// Horizon offsets in grid steps, strictly increasing.
    pub horizons: Vec<usize>,
    /// Decomposition levels (detail bands).
    pub levels: usize,
    pub architecture: Architecture,
    /// Embedding and hidden width (scale_mlp only).
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Fraction of rows held out as the chronological tail for validation.
    pub validation_fraction: f64,
}

impl ModelConfig {
    pub fn linear(window: usize, horizons: Vec<usize>, levels: usize) -> ModelConfig {
        ModelConfig {
            window,
            horizons,
            levels,
            architecture: Architecture::Linear,
            hidden_units: 0,
            learning_rate: 1e-2,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            seed: 42,
            validation_fraction: 0.2,
        }
    }

    pub fn scale_mlp(window: usize, horizons: Vec<usize>, levels: usize) -> ModelConfig {
        ModelConfig {
            architecture: Architecture::ScaleMlp,
            hidden_units: 16,
            learning_rate: 1e-3,
            ..ModelConfig::linear(window, horizons, levels)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> ModelConfig {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be >= 1".into()));
        }
        if self.levels == 0 {
            return Err(Error::InvalidArgument("levels must be >= 1".into()));
        }
        if self.horizons.is_empty()
            || self.horizons[0] == 0
            || self.horizons.windows(2).any(|p| p[1] <= p[0])
        {
            return Err(Error::InvalidArgument(
                "horizons must be nonempty, positive and strictly increasing".into(),
            ));
        }
        if !(0.0 < self.validation_fraction && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "validation_fraction must be in (0, 1)".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.architecture == Architecture::ScaleMlp && self.hidden_units == 0 {
            return Err(Error::InvalidArgument(
                "scale_mlp needs hidden_units >= 1".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("momentum must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Fixed feature-vector layout.
///
/// Band features come first, grouped band-major so each band group is one
/// contiguous slice: for every band (d_1..d_L, then a_L), for every predictor
/// channel, the trailing `window` values oldest-first. Then the station
/// forecast for every horizon, then four time encodings (sin/cos of
/// hour-of-day and day-of-year at issue time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub channels: usize,
    pub levels: usize,
    pub window: usize,
    pub horizons: usize,
}

impl FeatureLayout {
    pub fn bands(&self) -> usize {
        self.levels + 1
    }

    /// Width of one band group (all channels).
    pub fn band_block(&self) -> usize {
        self.channels * self.window
    }

    pub fn rest(&self) -> usize {
        self.horizons + 4
    }

    /// Total feature length: P·(L+1)·W + H + 4.
    pub fn len(&self) -> usize {
        self.bands() * self.band_block() + self.rest()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn band_range(&self, band: usize) -> std::ops::Range<usize> {
        let w = self.band_block();
        band * w..(band + 1) * w
    }

    pub fn rest_range(&self) -> std::ops::Range<usize> {
        let start = self.bands() * self.band_block();
        start..start + self.rest()
    }
}

/// sin/cos encodings of hour-of-day and day-of-year.
pub fn time_encodings(time: Timestamp) -> [f64; 4] {
    let secs = time.seconds();
    let day_frac = secs.rem_euclid(86_400) as f64 / 86_400.0;
    let date = chrono::DateTime::from_timestamp(secs, 0)
        .expect("timestamp in range")
        .date_naive();
    let year_len = if date.leap_year() { 366.0 } else { 365.0 };
    let year_frac = (date.ordinal0() as f64 + day_frac) / year_len;
    let day_angle = std::f64::consts::TAU * day_frac;
    let year_angle = std::f64::consts::TAU * year_frac;
    [day_angle.sin(), day_angle.cos(), year_angle.sin(), year_angle.cos()]
}

/// Per-feature and per-horizon z-score statistics, frozen from the training
/// split into the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    /// Features whose training variance was zero; their std is forced to 1
    /// and, once centered, they contribute a constant zero.
    pub zero_variance_features: Vec<usize>,
}

impl Normalization {
    pub fn identity(features: usize, horizons: usize) -> Normalization {
        Normalization {
            feature_mean: vec![0.0; features],
            feature_std: vec![1.0; features],
            target_mean: vec![0.0; horizons],
            target_std: vec![1.0; horizons],
            zero_variance_features: Vec::new(),
        }
    }

    pub fn fit(features: &[Vec<f64>], targets: &[Vec<f64>]) -> Normalization {
        let (feature_mean, feature_std, zero_variance_features) = fit_columns(features);
        let (target_mean, target_std, _) = fit_columns(targets);
        Normalization {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
            zero_variance_features,
        }
    }

    pub fn normalize_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn normalize_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.target_mean.iter().zip(&self.target_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.target_mean.iter().zip(&self.target_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

fn fit_columns(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let cols = rows.first().map(|r| r.len()).unwrap_or(0);
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; cols];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; cols];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    let mut frozen = Vec::new();
    let std = var
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v <= 0.0 {
                frozen.push(i);
                1.0
            } else {
                v.sqrt()
            }
        })
        .collect();
    (mean, std, frozen)
}

/// Residual targets per row: `e(t,h) = actual(t+h) - station(t,h)`.
pub fn compute_residuals(dataset: &AlignedDataset) -> Vec<Vec<f64>> {
    dataset
        .rows
        .iter()
        .map(|row| {
            row.actual
                .iter()
                .zip(&row.station)
                .map(|(a, s)| a - s)
                .collect()
        })
        .collect()
}

/// Feature matrix (and residual targets) for aligned rows.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub layout: FeatureLayout,
    /// Index into `dataset.rows` for each feature row.
    pub row_indices: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

/// Build feature vectors for every aligned row.
///
/// Each predictor's full series is decomposed causally once, then every row
/// slices the trailing `window` values of every band ending just before its
/// issue time. Rows whose slice would overlap the decomposition warm-up are
/// dropped (none survive alignment with a compliant window, but re-sliced
/// datasets may produce them).
pub fn build_features(dataset: &AlignedDataset, config: &ModelConfig) -> Result<FeatureSet> {
    config.validate()?;
    if config.horizons != dataset.horizons {
        return Err(Error::InvalidArgument(format!(
            "config horizons {:?} do not match dataset horizons {:?}",
            config.horizons, dataset.horizons
        )));
    }
    let warmup = warmup_len(config.levels);
    if dataset.window < config.window + warmup {
        return Err(Error::InvalidArgument(format!(
            "dataset window {} is too small for feature window {} + decomposition warm-up {}",
            dataset.window, config.window, warmup
        )));
    }

    let stacks = dataset
        .predictors
        .iter()
        .map(|p| decompose_causal(&p.values, config.levels))
        .collect::<Result<Vec<_>>>()?;

    let layout = FeatureLayout {
        channels: dataset.predictor_channels.len(),
        levels: config.levels,
        window: config.window,
        horizons: dataset.horizons.len(),
    };

    let w = config.window;
    let mut row_indices = Vec::with_capacity(dataset.rows.len());
    let mut features = Vec::with_capacity(dataset.rows.len());
    let mut residuals = Vec::with_capacity(dataset.rows.len());
    for (ri, row) in dataset.rows.iter().enumerate() {
        let i = row.issue_index;
        if i < w + warmup {
            continue;
        }
        let mut x = Vec::with_capacity(layout.len());
        for band in 0..layout.bands() {
            for stack in &stacks {
                let src = if band < config.levels {
                    &stack.details[band]
                } else {
                    &stack.approx
                };
                x.extend_from_slice(&src[i - w..i]);
            }
        }
        x.extend_from_slice(&row.station);
        x.extend_from_slice(&time_encodings(row.issue_time));
        debug_assert_eq!(x.len(), layout.len());
        features.push(x);
        residuals.push(
            row.actual
                .iter()
                .zip(&row.station)
                .map(|(a, s)| a - s)
                .collect(),
        );
        row_indices.push(ri);
    }

    Ok(FeatureSet {
        layout,
        row_indices,
        features,
        residuals,
    })
}

/// Band slices for a single issue time from a standalone history block.
///
/// Bit-equal to the corresponding slices of a full-series decomposition: the
/// block covers the entire causal reach of the sliced indices, so the same
/// arithmetic runs on the same values.
fn block_band_features(block: &[f64], window: usize, levels: usize) -> Result<Vec<Vec<f64>>> {
    let stack = decompose_causal(block, levels)?;
    let n = block.len();
    let mut out = Vec::with_capacity(levels + 1);
    for band in 0..=levels {
        let src = if band < levels {
            &stack.details[band]
        } else {
            &stack.approx
        };
        out.push(src[n - window..].to_vec());
    }
    Ok(out)
}

fn minimum_history(config: &ModelConfig) -> usize {
    config.window + warmup_len(config.levels)
}

/// One horizon of a forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonForecast {
    pub horizon_steps: usize,
    pub valid_time: Timestamp,
    pub station_value: f64,
    pub predicted_error: f64,
    pub predicted_value: f64,
}

/// Multi-horizon forecast at one issue time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub target: String,
    pub issue_time: Timestamp,
    pub resolution_seconds: u64,
    pub horizons: Vec<HorizonForecast>,
}

fn assemble_prediction(
    bundle: &ModelBundle,
    features: &[f64],
    station: &[f64],
    issue_time: Timestamp,
) -> ForecastResult {
    let layout = bundle.layout();
    let normalized = bundle.normalization.normalize_features(features);
    let raw = bundle.weights.forward(&normalized, &layout);
    let errors = bundle.normalization.denormalize_targets(&raw);
    let horizons = bundle
        .config
        .horizons
        .iter()
        .zip(station.iter().zip(&errors))
        .map(|(&h, (&s, &e))| {
            let predicted_value = s + e;
            HorizonForecast {
                horizon_steps: h,
                valid_time: issue_time.add_steps(h as i64, bundle.resolution_seconds),
                station_value: s,
                // Reported as the exact difference so the identity
                // predicted_value - station_value == predicted_error holds
                // bit-for-bit after rounding.
                predicted_error: predicted_value - s,
                predicted_value,
            }
        })
        .collect();
    ForecastResult {
        target: bundle.target.clone(),
        issue_time,
        resolution_seconds: bundle.resolution_seconds,
        horizons,
    }
}

/// Predict at `issue_time` from raw predictor history and station records.
///
/// History must cover `window + warm-up` valid cells immediately before the
/// issue time in every predictor channel; station records must cover every
/// configured horizon.
pub fn predict(
    bundle: &ModelBundle,
    history: &[UniformSeries],
    issue_time: Timestamp,
    station: &[StationForecastRecord],
) -> Result<ForecastResult> {
    let required = minimum_history(&bundle.config);
    let step = bundle.resolution_seconds;

    let mut blocks = Vec::with_capacity(bundle.predictor_channels.len());
    for channel in &bundle.predictor_channels {
        let series = history
            .iter()
            .find(|s| &s.channel == channel)
            .ok_or_else(|| Error::InvalidArgument(format!("no history series for channel {channel}")))?;
        if series.step_seconds != step {
            return Err(Error::InvalidArgument(format!(
                "history step {}s does not match bundle resolution {}s",
                series.step_seconds, step
            )));
        }
        let delta = issue_time.seconds() - series.start.seconds();
        if delta < 0 || delta % step as i64 != 0 {
            return Err(Error::InvalidArgument(format!(
                "issue time {issue_time} is not on the {channel} grid"
            )));
        }
        let idx = (delta / step as i64) as usize;
        if idx > series.len() {
            return Err(Error::InsufficientHistory {
                required,
                available: series.len(),
            });
        }
        let mut available = 0usize;
        while available < idx && series.valid[idx - 1 - available] {
            available += 1;
        }
        if available < required {
            return Err(Error::InsufficientHistory { required, available });
        }
        blocks.push(&series.values[idx - required..idx]);
    }

    let mut station_values = Vec::with_capacity(bundle.config.horizons.len());
    let mut missing = Vec::new();
    for &h in &bundle.config.horizons {
        let valid_time = issue_time.add_steps(h as i64, step);
        let found = station.iter().rev().find(|r| {
            r.channel == bundle.target && r.issue_time == issue_time && r.valid_time == valid_time
        });
        match found {
            Some(r) => station_values.push(r.value),
            None => missing.push(h),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingForecast(missing));
    }

    let layout = bundle.layout();
    let mut features = Vec::with_capacity(layout.len());
    let per_channel: Vec<Vec<Vec<f64>>> = blocks
        .iter()
        .map(|b| block_band_features(b, bundle.config.window, bundle.config.levels))
        .collect::<Result<_>>()?;
    for band in 0..layout.bands() {
        for bands in &per_channel {
            features.extend_from_slice(&bands[band]);
        }
    }
    features.extend_from_slice(&station_values);
    features.extend_from_slice(&time_encodings(issue_time));

    Ok(assemble_prediction(bundle, &features, &station_values, issue_time))
}

/// Check that a bundle can score a dataset; names the first differing field.
pub fn check_schema(bundle: &ModelBundle, dataset: &AlignedDataset) -> Result<()> {
    if bundle.target != dataset.target {
        return Err(Error::IncompatibleBundle {
            field: "target",
            bundle: bundle.target.clone(),
            data: dataset.target.clone(),
        });
    }
    if bundle.predictor_channels != dataset.predictor_channels {
        return Err(Error::IncompatibleBundle {
            field: "predictor_channels",
            bundle: bundle.predictor_channels.join(","),
            data: dataset.predictor_channels.join(","),
        });
    }
    if bundle.resolution_seconds != dataset.resolution_seconds {
        return Err(Error::IncompatibleBundle {
            field: "resolution_seconds",
            bundle: bundle.resolution_seconds.to_string(),
            data: dataset.resolution_seconds.to_string(),
        });
    }
    if bundle.config.horizons != dataset.horizons {
        return Err(Error::IncompatibleBundle {
            field: "horizons",
            bundle: format!("{:?}", bundle.config.horizons),
            data: format!("{:?}", dataset.horizons),
        });
    }
    Ok(())
}

/// Batch prediction over aligned rows (training-side feature path).
/// Returns `(row index, forecast)` pairs.
pub fn predict_rows(
    bundle: &ModelBundle,
    dataset: &AlignedDataset,
) -> Result<Vec<(usize, ForecastResult)>> {
    check_schema(bundle, dataset)?;
    let set = build_features(dataset, &bundle.config)?;
    let mut out = Vec::with_capacity(set.features.len());
    for (k, &ri) in set.row_indices.iter().enumerate() {
        let row = &dataset.rows[ri];
        out.push((
            ri,
            assemble_prediction(bundle, &set.features[k], &row.station, row.issue_time),
        ));
    }
    Ok(out)
}

/// Gradient-descent hyperparameters for one fitting run.
pub(crate) struct FitParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub freeze_matrix_weights: bool,
}

/// Minibatch SGD with momentum and early stopping on the validation loss;
/// returns the best-validation weights. Everything is driven by `rng`, so a
/// fixed seed reproduces the run bit-for-bit.
pub(crate) fn fit(
    mut weights: net::Weights,
    layout: &FeatureLayout,
    train_x: &[Vec<f64>],
    train_y: &[Vec<f64>],
    val_x: &[Vec<f64>],
    val_y: &[Vec<f64>],
    params: &FitParams,
    rng: &mut ChaCha8Rng,
) -> Result<(net::Weights, TrainSummary)> {
    let mut optimizer = net::SgdMomentum::new(weights.param_count(), params.learning_rate, params.momentum)
        .freeze_matrix_weights(params.freeze_matrix_weights);

    let mut best_val = net::mse_loss(&weights, layout, val_x, val_y);
    let mut best_weights = weights.clone();
    let mut stale_epochs = 0usize;
    let mut epochs_run = 0usize;
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 0..params.max_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(params.batch_size) {
            let bx: Vec<&Vec<f64>> = chunk.iter().map(|&i| &train_x[i]).collect();
            let by: Vec<&Vec<f64>> = chunk.iter().map(|&i| &train_y[i]).collect();
            let mut grads = weights.zeroed_like();
            let loss = net::mse_batch_gradients(&weights, layout, &bx, &by, &mut grads);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            optimizer.step(&mut weights, &grads);
        }
        epochs_run = epoch + 1;

        let val_loss = net::mse_loss(&weights, layout, val_x, val_y);
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_weights = weights.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= params.patience {
                break;
            }
        }
    }

    let final_train_loss = net::mse_loss(&best_weights, layout, train_x, train_y);
    Ok((
        best_weights,
        TrainSummary {
            epochs_run,
            final_train_loss,
            best_validation_loss: best_val,
        },
    ))
}

/// Split rows chronologically: everything after the boundary is validation.
pub(crate) fn chronological_split(n: usize, validation_fraction: f64) -> (usize, usize) {
    let n_val = ((n as f64 * validation_fraction).round() as usize).clamp(1, n - 1);
    (n - n_val, n_val)
}

/// Train a residual model on an aligned dataset.
pub fn train(dataset: &AlignedDataset, config: &ModelConfig) -> Result<ModelBundle> {
    let set = build_features(dataset, config)?;
    let n = set.features.len();
    if n < 50 {
        return Err(Error::InvalidArgument(format!(
            "training needs >= 50 usable rows, found {n}"
        )));
    }
    let (n_train, _) = chronological_split(n, config.validation_fraction);

    let normalization = Normalization::fit(&set.features[..n_train], &set.residuals[..n_train]);
    let xs: Vec<Vec<f64>> = set
        .features
        .iter()
        .map(|x| normalization.normalize_features(x))
        .collect();
    let ys: Vec<Vec<f64>> = set
        .residuals
        .iter()
        .map(|y| normalization.normalize_targets(y))
        .collect();
    let (train_x, val_x) = xs.split_at(n_train);
    let (train_y, val_y) = ys.split_at(n_train);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let weights = net::Weights::init(
        &set.layout,
        config.hidden_units,
        config.architecture == Architecture::Linear,
        &mut rng,
    );
    let params = FitParams {
        learning_rate: config.learning_rate,
        momentum: config.momentum,
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        freeze_matrix_weights: false,
    };
    let (best_weights, train_summary) =
        fit(weights, &set.layout, train_x, train_y, val_x, val_y, &params, &mut rng)?;

    Ok(ModelBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        target: dataset.target.clone(),
        predictor_channels: dataset.predictor_channels.clone(),
        resolution_seconds: dataset.resolution_seconds,
        config: config.clone(),
        normalization,
        weights: best_weights,
        train_summary,
    })
}

/// Compare analytic gradients against central finite differences on a tiny
/// dataset; returns the maximum relative error over sampled parameters.
pub fn gradient_check(config: &ModelConfig, dataset: &AlignedDataset) -> Result<f64> {
    let set = build_features(dataset, config)?;
    let rows = set.features.len().min(20);
    let normalization = Normalization::fit(&set.features[..rows], &set.residuals[..rows]);
    let xs: Vec<Vec<f64>> = set.features[..rows]
        .iter()
        .map(|x| normalization.normalize_features(x))
        .collect();
    let ys: Vec<Vec<f64>> = set.residuals[..rows]
        .iter()
        .map(|y| normalization.normalize_targets(y))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = net::Weights::init(
        &set.layout,
        config.hidden_units,
        config.architecture == Architecture::Linear,
        &mut rng,
    );
    // Zero-initialized maps would hide gradient defects behind them; perturb
    // every parameter to a generic point first.
    weights.visit_params(|_, v| {
        if *v == 0.0 {
            *v = rng.random_range(-0.25..0.25);
        }
    });
    Ok(net::finite_difference_check(
        &weights,
        &set.layout,
        &xs,
        &ys,
        50,
        &mut rng,
    ))
}

/// Metrics for using the station forecast directly as the prediction.
pub fn baseline_station(dataset: &AlignedDataset, epsilon: f64) -> Result<MetricSet> {
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = dataset
        .horizons
        .iter()
        .enumerate()
        .map(|(hi, _)| {
            dataset
                .rows
                .iter()
                .map(|r| (r.actual[hi], r.station[hi]))
                .unzip()
        })
        .collect();
    metric_set_per_horizon(&dataset.horizons, &pairs, epsilon, 0)
}

/// Metrics for predicting the value observed at issue time for all horizons.
/// Rows whose target is invalid at issue time are skipped and counted.
pub fn baseline_persistence(dataset: &AlignedDataset, epsilon: f64) -> Result<MetricSet> {
    let mut skipped = 0usize;
    let anchored: Vec<(&crate::align::AlignedRow, f64)> = dataset
        .rows
        .iter()
        .filter_map(|r| match dataset.target_at_issue(r) {
            Some(v) => Some((r, v)),
            None => {
                skipped += 1;
                None
            }
        })
        .collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = dataset
        .horizons
        .iter()
        .enumerate()
        .map(|(hi, _)| {
            anchored
                .iter()
                .map(|(r, anchor)| (r.actual[hi], *anchor))
                .unzip()
        })
        .collect();
    metric_set_per_horizon(&dataset.horizons, &pairs, epsilon, skipped)
}
