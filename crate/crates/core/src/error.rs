use thiserror::Error;

/// Errors surfaced by every layer of the stack, from bit-level coding up to
/// the deployment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported coding configuration: {0}")]
    UnsupportedConfig(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("no HARQ soft buffer for ue {ue_id} process {harq_pid}")]
    HarqBufferMissing { ue_id: u32, harq_pid: u8 },
    #[error("capability mismatch: {0}")]
    CapabilityMismatch(String),
    #[error("resource exhausted: {0}")]
    ResourceExhausted(String),
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("empty input")]
    EmptyInput,
    #[error("slot {slot} is a {actual:?} slot, expected {expected}")]
    WrongSlotKind {
        slot: u64,
        actual: crate::highphy::SlotKind,
        expected: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient cores: {0}")]
    Capacity(String),
    #[error("data file `{file}`: {reason}")]
    DataFile { file: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
