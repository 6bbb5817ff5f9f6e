//! Crate-wide error type with stable, machine-parseable error classes.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the toolkit.
///
/// Each variant maps to a stable kebab-case class string (see [`Error::class`])
/// that the CLI prints on a single line, so callers can dispatch on failures
/// without parsing prose.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("alignment produced no rows (skipped: {0})")]
    EmptyDataset(crate::align::SkipCounts),

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedCsv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("incompatible bundle: field `{field}` differs (bundle: {bundle}, data: {data})")]
    IncompatibleBundle {
        field: &'static str,
        bundle: String,
        data: String,
    },

    #[error("metric undefined: all {excluded} points fell at or below the near-zero guard")]
    UndefinedMetric { excluded: usize },

    #[error("missing station forecast for horizon step(s) {0:?}")]
    MissingForecast(Vec<usize>),

    #[error("insufficient history: {required} trailing valid steps required, {available} available")]
    InsufficientHistory { required: usize, available: usize },

    #[error("provider `{provider}` does not support channel `{channel}`")]
    Capability { provider: String, channel: String },

    #[error("corrupt scale stack: {0}")]
    CorruptStack(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unsupported bundle schema version {found} (supported: {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("bad config: {0}")]
    Config(String),
}

impl Error {
    /// Stable class identifier printed by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::MalformedCsv { .. } => "malformed-csv",
            Error::Io { .. } => "io",
            Error::Divergence { .. } => "divergence",
            Error::IncompatibleBundle { .. } => "incompatible-bundle",
            Error::UndefinedMetric { .. } => "undefined-metric",
            Error::MissingForecast(_) => "missing-forecast",
            // The predict contract files this under invalid arguments; the
            // HTTP layer still matches the variant to report 409 with counts.
            Error::InsufficientHistory { .. } => "invalid-argument",
            Error::Capability { .. } => "capability",
            Error::CorruptStack(_) => "corrupt-stack",
            Error::UnknownPreset(_) => "unknown-preset",
            Error::SchemaVersion { .. } => "schema-version",
            Error::Config(_) => "config",
        }
    }

    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
