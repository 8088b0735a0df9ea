//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by signal processing, training, identification,
/// synthesis, experiments, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// A sampled echo failed a structural invariant (too short, bad interval).
    #[error("invalid echo: {0}")]
    InvalidEcho(String),

    /// The requested time window contains no samples of the echo.
    #[error("window [{start_us}, {end_us}] us contains no samples")]
    EmptyWindow { start_us: f64, end_us: f64 },

    /// All samples are zero, or the band power vanished; no features exist.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// The sampling grid cannot represent the 30-190 kHz perception band.
    #[error("sample interval too coarse: Nyquist {nyquist_hz} Hz is below the {required_hz} Hz band edge")]
    InsufficientBandwidth { nyquist_hz: f64, required_hz: f64 },

    /// Feature averaging was asked for on an empty series.
    #[error("cannot average an empty feature series")]
    EmptySeries,

    /// Fewer echoes were supplied than the training configuration requires.
    #[error("insufficient echoes: need {needed}, got {got}")]
    InsufficientEchoes { needed: usize, got: usize },

    /// Identification was attempted against an empty database.
    #[error("target database is empty")]
    EmptyDatabase,

    /// A power comparison received a non-positive power value.
    #[error("power distance requires positive powers, got {0} and {1}")]
    NonPositivePower(f64, f64),

    /// An echo specification is self-contradictory or out of range.
    #[error("invalid echo spec: {0}")]
    InvalidSpec(String),

    /// A noise level is unusable (NaN, or infinite in the noisy direction).
    #[error("invalid noise level: {0}")]
    InvalidLevel(String),

    /// The difference-limen search exhausted its budget without a distinction.
    #[error("no distinction found up to {max_delta_us} us at center {center_us} us")]
    InsufficientBudget { center_us: f64, max_delta_us: f64 },

    /// A target with this name already exists in the database.
    #[error("duplicate target name: {0}")]
    DuplicateTarget(String),

    /// A database file was written by a newer schema than this build reads.
    #[error("unsupported database schema version {0}")]
    UnsupportedVersion(u32),

    /// A file did not conform to its declared format.
    #[error("format error: {0}")]
    FormatError(String),

    /// A value cannot be serialized faithfully (NaN in a result row).
    #[error("serialization error: {0}")]
    SerializationError(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
