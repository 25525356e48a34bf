use thiserror::Error;

pub type Result<T> = std::result::Result<T, HenError>;

#[derive(Debug, Error)]
pub enum HenError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("memory bank must hold at least one pattern of positive length")]
    EmptyBank,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("energy is only defined for dot-product similarity")]
    EnergyUndefined,

    #[error("singular value decomposition did not converge")]
    SvdNotConverged,

    #[error("pattern not present in the embedding table")]
    LookupMiss,

    #[error("embedding table is empty")]
    EmptyTable,

    #[error("duplicate pattern id {0}")]
    DuplicateId(u32),

    #[error("pixel block of side {side} holds fewer than 256 cells")]
    BlockTooSmall { side: usize },

    #[error("value {value} outside [0, {range}] at index {index}")]
    OutOfRange { value: f64, range: f64, index: usize },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("memory bank has zero numerical rank")]
    ZeroRank,

    #[error(transparent)]
    Henb(#[from] crate::henb::HenbError),
}
