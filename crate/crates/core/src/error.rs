use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("duplicate label for ({field_id}, {year}) at rows {first_row} and {second_row}")]
    LabelConflict {
        field_id: String,
        year: i32,
        first_row: usize,
        second_row: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series has no clear samples to fill from")]
    Unfillable,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("calendars do not overlap (t_l = {t_l}, t_u = {t_u})")]
    EmptyIntersection { t_l: i32, t_u: i32 },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("no finite warping path within the band")]
    NoPath,

    #[error("series are not on the same grid")]
    GridMismatch,

    #[error("class `{class}` has {have} samples, {need} required")]
    InsufficientSamples {
        class: String,
        have: usize,
        need: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no training sample at finite distance")]
    Unclassifiable,

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
