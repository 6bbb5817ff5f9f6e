//! File-backed append-only persistence.
//!
//! A store is a directory of numbered segment files. Every append writes a
//! whole new segment to a dot-prefixed temp file first and renames it into
//! place, so an interrupted write can only ever leave a temp file behind —
//! committed segments are never touched again. Loading concatenates segments
//! in numeric order and ignores anything that does not match the segment
//! name pattern.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::ForecastResult;
use crate::timeseries::{SensorReading, Timestamp};

fn segment_paths(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut numbered = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(rest) = name.strip_prefix("segment-") {
            if let Some(num) = rest.strip_suffix(&format!(".{extension}")) {
                if let Ok(n) = num.parse::<u64>() {
                    numbered.push((n, entry.path()));
                }
            }
        }
    }
    numbered.sort();
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

fn next_segment(dir: &Path, extension: &str) -> Result<PathBuf> {
    let existing = segment_paths(dir, extension)?;
    let next = existing.len() as u64 + 1;
    // Segment numbers are derived from names, not the count, to survive gaps.
    let max = existing
        .iter()
        .filter_map(|p| {
            p.file_stem()
                .and_then(|s| s.to_string_lossy().strip_prefix("segment-").map(str::to_string))
        })
        .filter_map(|s| s.parse::<u64>().ok())
        .max()
        .unwrap_or(0);
    Ok(dir.join(format!("segment-{:06}.{extension}", max.max(next - 1) + 1)))
}

fn commit(dir: &Path, extension: &str, contents: &[u8]) -> Result<()> {
    let final_path = next_segment(dir, extension)?;
    let tmp = dir.join(format!(
        ".tmp-{}",
        final_path.file_name().expect("segment name").to_string_lossy()
    ));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &final_path).map_err(|e| Error::io(&final_path, e))
}

/// Append-only store of sensor readings (CSV segments).
#[derive(Debug)]
pub struct ReadingStore {
    dir: PathBuf,
}

impl ReadingStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<ReadingStore> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ReadingStore { dir })
    }

    pub fn append(&self, readings: &[SensorReading]) -> Result<()> {
        if readings.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        crate::csvio::write_sensor_csv_to(&mut buf, readings).map_err(|e| Error::io(&self.dir, e))?;
        commit(&self.dir, "csv", &buf)
    }

    pub fn load(&self) -> Result<Vec<SensorReading>> {
        let mut out = Vec::new();
        for path in segment_paths(&self.dir, "csv")? {
            out.extend(crate::csvio::read_sensor_csv(&path)?);
        }
        Ok(out)
    }

    pub fn segment_count(&self) -> Result<usize> {
        Ok(segment_paths(&self.dir, "csv")?.len())
    }
}

/// One persisted forecast computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastStoreEntry {
    pub sensor_id: String,
    pub target: String,
    pub issue_time: Timestamp,
    /// Content hash of the bundle that computed the result.
    pub bundle_hash: String,
    pub created_at: Timestamp,
    pub result: ForecastResult,
}

impl ForecastStoreEntry {
    pub fn key(&self) -> (String, String, Timestamp, String) {
        (
            self.sensor_id.clone(),
            self.target.clone(),
            self.issue_time,
            self.bundle_hash.clone(),
        )
    }
}

/// Append-only store of computed forecasts (JSON-lines segments).
#[derive(Debug)]
pub struct ForecastStore {
    dir: PathBuf,
}

impl ForecastStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<ForecastStore> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ForecastStore { dir })
    }

    pub fn append(&self, entry: &ForecastStoreEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(|e| Error::Config(e.to_string()))?;
        line.push(b'\n');
        commit(&self.dir, "jsonl", &line)
    }

    pub fn load(&self) -> Result<Vec<ForecastStoreEntry>> {
        let mut out = Vec::new();
        for path in segment_paths(&self.dir, "jsonl")? {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for line in text.lines().filter(|l| !l.is_empty()) {
                out.push(
                    serde_json::from_str(line)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                );
            }
        }
        Ok(out)
    }
}
