use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data or parameters violate a precondition.
    #[error("{0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty coordinate {0}: no observed points")]
    EmptyCoordinate(usize),

    #[error("segment too short: m = {0}, need m >= 4")]
    SegmentTooShort(usize),

    #[error("gap in MPdist input")]
    GapInInput,

    #[error("insufficient clean data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("bundle format: {0}")]
    Format(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_)
                | Error::Shape(_)
                | Error::EmptyCoordinate(_)
                | Error::SegmentTooShort(_)
                | Error::GapInInput
                | Error::InsufficientData(_)
                | Error::Csv(_)
        )
    }
}
