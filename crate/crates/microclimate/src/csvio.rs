//! Readers and writers for the documented CSV interchange formats.
//!
//! Sensor CSV:   `sensor_id,channel,timestamp_utc,value`
//! Forecast CSV: `channel,issue_time_utc,valid_time_utc,value`
//!
//! Timestamps are RFC 3339; any offset is accepted on input and normalized
//! to UTC. Parse failures name the offending line.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::timeseries::{SensorReading, StationForecastRecord, Timestamp};

const SENSOR_HEADER: [&str; 4] = ["sensor_id", "channel", "timestamp_utc", "value"];
const FORECAST_HEADER: [&str; 4] = ["channel", "issue_time_utc", "valid_time_utc", "value"];

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedCsv {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, record: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = record.iter().collect();
    if got != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn parse_value(path: &Path, line: u64, text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| malformed(path, line, format!("bad value `{text}`")))?;
    if !v.is_finite() {
        return Err(malformed(path, line, format!("non-finite value `{text}`")));
    }
    Ok(v)
}

fn parse_time(path: &Path, line: u64, text: &str) -> Result<Timestamp> {
    Timestamp::parse_rfc3339(text.trim()).map_err(|e| malformed(path, line, e.to_string()))
}

pub fn read_sensor_csv_from(reader: impl Read, path: &Path) -> Result<Vec<SensorReading>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(
        path,
        rdr.headers().map_err(|e| malformed(path, 1, e.to_string()))?,
        &SENSOR_HEADER,
    )?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(path, line, format!("expected 4 fields, found {}", record.len())));
        }
        out.push(SensorReading {
            sensor_id: record[0].trim().to_string(),
            channel: record[1].trim().to_string(),
            time: parse_time(path, line, &record[2])?,
            value: parse_value(path, line, &record[3])?,
        });
    }
    Ok(out)
}

pub fn read_sensor_csv(path: impl AsRef<Path>) -> Result<Vec<SensorReading>> {
    let path = path.as_ref();
    read_sensor_csv_from(open(path)?, path)
}

pub fn write_sensor_csv_to(writer: impl Write, readings: &[SensorReading]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SENSOR_HEADER)?;
    for r in readings {
        w.write_record([
            r.sensor_id.as_str(),
            r.channel.as_str(),
            &r.time.to_rfc3339(),
            &format_value(r.value),
        ])?;
    }
    w.flush()
}

pub fn write_sensor_csv(path: impl AsRef<Path>, readings: &[SensorReading]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sensor_csv_to(file, readings).map_err(|e| Error::io(path, e))
}

pub fn read_forecast_csv_from(reader: impl Read, path: &Path) -> Result<Vec<StationForecastRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(
        path,
        rdr.headers().map_err(|e| malformed(path, 1, e.to_string()))?,
        &FORECAST_HEADER,
    )?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(path, line, format!("expected 4 fields, found {}", record.len())));
        }
        let rec = StationForecastRecord {
            channel: record[0].trim().to_string(),
            issue_time: parse_time(path, line, &record[1])?,
            valid_time: parse_time(path, line, &record[2])?,
            value: parse_value(path, line, &record[3])?,
        };
        if rec.valid_time < rec.issue_time {
            return Err(malformed(
                path,
                line,
                format!("valid_time {} precedes issue_time {}", rec.valid_time, rec.issue_time),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_forecast_csv(path: impl AsRef<Path>) -> Result<Vec<StationForecastRecord>> {
    let path = path.as_ref();
    read_forecast_csv_from(open(path)?, path)
}

pub fn write_forecast_csv_to(
    writer: impl Write,
    records: &[StationForecastRecord],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FORECAST_HEADER)?;
    for r in records {
        w.write_record([
            r.channel.as_str(),
            &r.issue_time.to_rfc3339(),
            &r.valid_time.to_rfc3339(),
            &format_value(r.value),
        ])?;
    }
    w.flush()
}

pub fn write_forecast_csv(path: impl AsRef<Path>, records: &[StationForecastRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_forecast_csv_to(file, records).map_err(|e| Error::io(path, e))
}

/// Shortest decimal text that parses back to the identical f64.
pub fn format_value(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; going through it keeps CSV and JSON
    // renderings of the same value identical.
    serde_json::to_string(&v).expect("finite f64 serializes")
}
