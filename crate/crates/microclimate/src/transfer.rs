//! Transfer a trained bundle to a new site with scarce labelled data.
//!
//! Adaptation is deliberately conservative: normalization statistics are
//! re-estimated from the target data (which alone absorbs constant bias
//! shifts), then gradient descent continues from the source weights. With
//! `freeze_encoders` set only the output head and bias vectors move, so a
//! few dozen target rows cannot wreck the source representation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::AlignedDataset;
use crate::error::{Error, Result};
use crate::forecaster::{
    build_features, check_schema, chronological_split, fit, FitParams, ModelBundle, Normalization,
};

/// Adaptation hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    /// Fine-tuning epochs; 0 re-estimates normalization only.
    pub adapt_epochs: usize,
    /// Learning rate; defaults to a tenth of the source training rate.
    pub adapt_learning_rate: Option<f64>,
    /// Keep encoder and hidden matrices fixed; move only head and biases.
    pub freeze_encoders: bool,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            adapt_epochs: 60,
            adapt_learning_rate: None,
            freeze_encoders: true,
            seed: 42,
        }
    }
}

/// Adapt `source` to `target_data`, returning a new bundle. The source
/// bundle is never modified.
pub fn adapt(
    source: &ModelBundle,
    target_data: &AlignedDataset,
    config: &AdaptConfig,
) -> Result<ModelBundle> {
    check_schema(source, target_data)?;
    let set = build_features(target_data, &source.config)?;
    let n = set.features.len();
    if n < 50 {
        return Err(Error::InvalidArgument(format!(
            "adaptation needs >= 50 usable target rows, found {n}"
        )));
    }
    let (n_train, _) = chronological_split(n, source.config.validation_fraction);
    let normalization = Normalization::fit(&set.features[..n_train], &set.residuals[..n_train]);

    let mut adapted = ModelBundle {
        normalization,
        ..source.clone()
    };
    if config.adapt_epochs == 0 {
        return Ok(adapted);
    }

    let xs: Vec<Vec<f64>> = set
        .features
        .iter()
        .map(|x| adapted.normalization.normalize_features(x))
        .collect();
    let ys: Vec<Vec<f64>> = set
        .residuals
        .iter()
        .map(|y| adapted.normalization.normalize_targets(y))
        .collect();
    let (train_x, val_x) = xs.split_at(n_train);
    let (train_y, val_y) = ys.split_at(n_train);

    let params = FitParams {
        learning_rate: config
            .adapt_learning_rate
            .unwrap_or(source.config.learning_rate * 0.1),
        momentum: source.config.momentum,
        batch_size: source.config.batch_size,
        max_epochs: config.adapt_epochs,
        patience: source.config.patience,
        freeze_matrix_weights: config.freeze_encoders,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (weights, train_summary) = fit(
        adapted.weights.clone(),
        &source.layout(),
        train_x,
        train_y,
        val_x,
        val_y,
        &params,
        &mut rng,
    )?;
    adapted.weights = weights;
    adapted.train_summary = train_summary;
    Ok(adapted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::align;
    use crate::forecaster::{predict_rows, train, ModelConfig};
    use crate::presets;
    use crate::synthgen::generate;
    use crate::timeseries::{fill_gaps, resample_uniform, ChannelSpec, Timestamp};

    fn dataset_from(spec: &crate::synthgen::FarmScenarioSpec, window: usize) -> AlignedDataset {
        let gen = generate(spec).unwrap();
        let start = spec.start;
        let end = Timestamp(start.0 + (spec.cells() as u64 * spec.resolution_seconds) as i64);
        let mut predictors = Vec::new();
        for name in &spec.predictors {
            let ch = ChannelSpec::builtin(name).unwrap();
            let r = resample_uniform(&gen.readings, &ch, start, spec.resolution_seconds, end).unwrap();
            predictors.push(fill_gaps(&r.series, 3));
        }
        let target = predictors
            .iter()
            .find(|s| s.channel == spec.target)
            .unwrap()
            .clone();
        align(&target, &predictors, &gen.forecasts, window, &spec.horizons).unwrap()
    }

    fn quick_model(preset: &presets::Preset) -> ModelConfig {
        let mut m = preset.model.clone();
        m.max_epochs = 30;
        m
    }

    fn pair() -> (ModelBundle, AlignedDataset) {
        let (source_spec, target_spec) = presets::transfer_pair();
        let preset = presets::by_name("temperature-6h").unwrap();
        let source_ds = dataset_from(&source_spec, preset.align_window());
        let target_ds = dataset_from(&target_spec, preset.align_window());
        let bundle = train(&source_ds, &quick_model(&preset)).unwrap();
        (bundle, target_ds)
    }

    #[test]
    fn zero_epoch_adapt_is_pure_recalibration() {
        let (source, target_ds) = pair();
        let adapted = adapt(
            &source,
            &target_ds,
            &AdaptConfig {
                adapt_epochs: 0,
                ..AdaptConfig::default()
            },
        )
        .unwrap();
        assert_eq!(adapted.weights, source.weights);

        // Identical to manually swapping in target-recomputed normalization.
        let set = build_features(&target_ds, &source.config).unwrap();
        let (n_train, _) = chronological_split(set.features.len(), source.config.validation_fraction);
        let expect_norm = Normalization::fit(&set.features[..n_train], &set.residuals[..n_train]);
        assert_eq!(adapted.normalization, expect_norm);

        let manual = ModelBundle {
            normalization: expect_norm,
            ..source.clone()
        };
        let a = predict_rows(&adapted, &target_ds).unwrap();
        let b = predict_rows(&manual, &target_ds).unwrap();
        for ((_, fa), (_, fb)) in a.iter().zip(&b) {
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn adapt_never_mutates_the_source() {
        let (source, target_ds) = pair();
        let before = source.to_json();
        let _ = adapt(&source, &target_ds, &AdaptConfig::default()).unwrap();
        assert_eq!(source.to_json(), before);
    }

    #[test]
    fn adapt_is_deterministic_under_a_fixed_seed() {
        let (source, target_ds) = pair();
        let cfg = AdaptConfig {
            adapt_epochs: 10,
            ..AdaptConfig::default()
        };
        let a = adapt(&source, &target_ds, &cfg).unwrap();
        let b = adapt(&source, &target_ds, &cfg).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn schema_mismatch_names_the_field() {
        let (source, target_ds) = pair();
        let mut wrong = target_ds.clone();
        wrong.resolution_seconds = 3600;
        match adapt(&source, &wrong, &AdaptConfig::default()).unwrap_err() {
            Error::IncompatibleBundle { field, .. } => assert_eq!(field, "resolution_seconds"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_target_rows_is_an_error() {
        let (source, target_ds) = pair();
        let tiny = target_ds.with_rows(target_ds.rows[..20].to_vec());
        assert_eq!(
            adapt(&source, &tiny, &AdaptConfig::default()).unwrap_err().class(),
            "invalid-argument"
        );
    }
}
