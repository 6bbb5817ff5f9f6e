//! Weather-forecast provider abstraction with file-backed and simulated
//! implementations. Live commercial APIs stay behind this trait; adding one
//! never touches forecaster code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthgen::{generate, FarmScenarioSpec};
use crate::timeseries::{StationForecastRecord, Timestamp};

/// What a provider offers: where it forecasts, which channels, at what
/// resolution and how far out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub channels: Vec<String>,
    pub resolution_seconds: u64,
    pub max_horizon_steps: usize,
}

impl ProviderDescriptor {
    pub fn new(
        name: &str,
        latitude: f64,
        longitude: f64,
        channels: Vec<String>,
        resolution_seconds: u64,
        max_horizon_steps: usize,
    ) -> Result<ProviderDescriptor> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::InvalidArgument(format!("latitude {latitude} out of range")));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::InvalidArgument(format!("longitude {longitude} out of range")));
        }
        Ok(ProviderDescriptor {
            name: name.to_string(),
            latitude,
            longitude,
            channels,
            resolution_seconds,
            max_horizon_steps,
        })
    }

    pub fn supports(&self, channel: &str) -> bool {
        self.channels.iter().any(|c| c == channel)
    }
}

/// A source of station forecast records.
pub trait ForecastProvider {
    fn descriptor(&self) -> &ProviderDescriptor;

    /// All records for `channel` with issue time in `[from, to]`, with the
    /// provider's full horizon fan per issue, sorted by (issue, valid) and
    /// deduplicated last-wins. An empty intersection is an empty list, not
    /// an error.
    fn fetch_forecasts(
        &self,
        channel: &str,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<StationForecastRecord>>;
}

fn check_range(from: Timestamp, to: Timestamp) -> Result<()> {
    if to < from {
        return Err(Error::InvalidArgument(format!(
            "empty issue range: {from} > {to}"
        )));
    }
    Ok(())
}

fn capability_error(descriptor: &ProviderDescriptor, channel: &str) -> Error {
    Error::Capability {
        provider: descriptor.name.clone(),
        channel: channel.to_string(),
    }
}

/// Sort by (issue, valid) and keep the last parsed record per key.
fn sort_dedup(records: Vec<StationForecastRecord>) -> Vec<StationForecastRecord> {
    let mut map = std::collections::BTreeMap::new();
    for r in records {
        map.insert((r.issue_time, r.valid_time), r);
    }
    map.into_values().collect()
}

/// Reads the documented forecast CSV on every fetch: a pure function of the
/// current file content, with no caching across changed files.
pub struct FileProvider {
    descriptor: ProviderDescriptor,
    path: std::path::PathBuf,
}

impl FileProvider {
    pub fn new(descriptor: ProviderDescriptor, path: impl Into<std::path::PathBuf>) -> FileProvider {
        FileProvider {
            descriptor,
            path: path.into(),
        }
    }

    /// Descriptor inferred from the file itself: it supports whatever
    /// channels the file mentions.
    pub fn open(name: &str, path: impl Into<std::path::PathBuf>) -> Result<FileProvider> {
        let path = path.into();
        let records = crate::csvio::read_forecast_csv(&path)?;
        let mut channels: Vec<String> = records.iter().map(|r| r.channel.clone()).collect();
        channels.sort();
        channels.dedup();
        let resolution = records
            .iter()
            .map(|r| r.horizon_seconds())
            .filter(|&h| h > 0)
            .min()
            .unwrap_or(3600) as u64;
        let max_steps = records
            .iter()
            .map(|r| r.horizon_seconds() as u64 / resolution.max(1))
            .max()
            .unwrap_or(0) as usize;
        Ok(FileProvider {
            descriptor: ProviderDescriptor::new(name, 0.0, 0.0, channels, resolution, max_steps)?,
            path,
        })
    }
}

impl ForecastProvider for FileProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn fetch_forecasts(
        &self,
        channel: &str,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<StationForecastRecord>> {
        check_range(from, to)?;
        if !self.descriptor.supports(channel) {
            return Err(capability_error(&self.descriptor, channel));
        }
        let mut records = crate::csvio::read_forecast_csv(&self.path)?;
        records.retain(|r| r.channel == channel && r.issue_time >= from && r.issue_time <= to);
        Ok(sort_dedup(records))
    }
}

/// Generates its records from a scenario spec at construction; identical
/// spec and seed mean identical records, byte for byte, matching what the
/// generator writes to the forecast CSV.
pub struct SimulatedProvider {
    descriptor: ProviderDescriptor,
    records: Vec<StationForecastRecord>,
}

impl SimulatedProvider {
    pub fn new(spec: &FarmScenarioSpec) -> Result<SimulatedProvider> {
        let generated = generate(spec)?;
        let descriptor = ProviderDescriptor::new(
            &format!("simulated:{}", spec.name),
            0.0,
            0.0,
            vec![spec.target.clone()],
            spec.resolution_seconds,
            *spec.horizons.last().expect("validated nonempty"),
        )?;
        Ok(SimulatedProvider {
            descriptor,
            records: generated.forecasts,
        })
    }
}

impl ForecastProvider for SimulatedProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn fetch_forecasts(
        &self,
        channel: &str,
        from: Timestamp,
        to: Timestamp,
    ) -> Result<Vec<StationForecastRecord>> {
        check_range(from, to)?;
        if !self.descriptor.supports(channel) {
            return Err(capability_error(&self.descriptor, channel));
        }
        Ok(sort_dedup(
            self.records
                .iter()
                .filter(|r| r.issue_time >= from && r.issue_time <= to)
                .cloned()
                .collect(),
        ))
    }
}
