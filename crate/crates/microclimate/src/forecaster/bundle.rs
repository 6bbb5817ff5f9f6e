//! Serialized model bundles: the portable, versioned unit that moves a
//! trained residual model between processes, machines and farms.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forecaster::net::Weights;
use crate::forecaster::{FeatureLayout, ModelConfig, Normalization};

/// Current bundle schema. Bumped on any incompatible layout change; loads of
/// other versions are rejected rather than guessed at.
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Summary of the training run that produced a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
}

/// A trained residual forecaster: weights, frozen normalization statistics,
/// configuration and provenance. Immutable after training; any number of
/// readers may predict from the same bundle concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub target: String,
    pub predictor_channels: Vec<String>,
    pub resolution_seconds: u64,
    pub config: ModelConfig,
    pub normalization: Normalization,
    pub weights: Weights,
    pub train_summary: TrainSummary,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: Option<u32>,
}

impl ModelBundle {
    /// A bundle with all-zero weights and identity normalization: its
    /// predicted error is exactly zero, so predictions pass the station
    /// forecast through unchanged. Useful for debugging plumbing.
    pub fn zero_debug(
        target: &str,
        predictor_channels: &[String],
        resolution_seconds: u64,
        config: ModelConfig,
    ) -> ModelBundle {
        let layout = FeatureLayout {
            channels: predictor_channels.len(),
            levels: config.levels,
            window: config.window,
            horizons: config.horizons.len(),
        };
        let mut rng = rand::SeedableRng::seed_from_u64(config.seed);
        let weights =
            Weights::init(&layout, config.hidden_units.max(1), false, &mut rng).zeroed_like();
        let weights = match config.architecture {
            super::Architecture::Linear => Weights::init(&layout, 0, true, &mut rng),
            super::Architecture::ScaleMlp => weights,
        };
        ModelBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            target: target.to_string(),
            predictor_channels: predictor_channels.to_vec(),
            resolution_seconds,
            normalization: Normalization::identity(layout.len(), config.horizons.len()),
            config,
            weights,
            train_summary: TrainSummary {
                epochs_run: 0,
                final_train_loss: 0.0,
                best_validation_loss: 0.0,
            },
        }
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            channels: self.predictor_channels.len(),
            levels: self.config.levels,
            window: self.config.window,
            horizons: self.config.horizons.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<ModelBundle> {
        let probe: VersionProbe = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("unreadable bundle: {e}")))?;
        match probe.schema_version {
            None => return Err(Error::Config("bundle has no schema_version field".into())),
            Some(v) if v != BUNDLE_SCHEMA_VERSION => {
                return Err(Error::SchemaVersion {
                    found: v,
                    supported: BUNDLE_SCHEMA_VERSION,
                })
            }
            Some(_) => {}
        }
        serde_json::from_str(text).map_err(|e| Error::Config(format!("unreadable bundle: {e}")))
    }

    /// Write atomically: serialize to a sibling temp file, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_json(&text)
    }

    /// Content identity: SHA-256 of the compact serialization.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("bundle serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> ModelConfig {
        ModelConfig::linear(4, vec![1, 2, 3], 2)
    }

    #[test]
    fn bundle_round_trips_bit_exactly() {
        let channels = vec!["ambient_temperature".to_string(), "wind_speed".to_string()];
        let bundle = ModelBundle::zero_debug("ambient_temperature", &channels, 3600, sample_config());
        let json = bundle.to_json();
        let back = ModelBundle::from_json(&json).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.content_hash(), bundle.content_hash());
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let channels = vec!["ambient_temperature".to_string()];
        let bundle = ModelBundle::zero_debug("ambient_temperature", &channels, 3600, sample_config());
        let json = bundle.to_json().replace("\"schema_version\": 1", "\"schema_version\": 9");
        let err = ModelBundle::from_json(&json).unwrap_err();
        assert_eq!(err.class(), "schema-version");
    }

    #[test]
    fn save_load_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let channels = vec!["ambient_temperature".to_string()];
        let bundle = ModelBundle::zero_debug("ambient_temperature", &channels, 3600, sample_config());
        bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back, bundle);
    }
}
