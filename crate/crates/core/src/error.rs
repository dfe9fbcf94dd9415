use thiserror::Error;

/// Errors produced by depth alignment operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid pixels in the masked region")]
    NoValidPixels,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("every sample was dropped while pairing with the prediction")]
    EmptyAfterPairing,

    #[error("degenerate min-max range: all valid values are equal")]
    DegenerateRange,

    #[error("degenerate median absolute deviation: all valid values are equal")]
    DegenerateMad,

    #[error("degenerate design: predicted depths have (near) zero variance")]
    DegenerateDesign,

    #[error("pseudo focal length is zero")]
    ZeroFocal,

    #[error("non-finite residuals encountered during the fit")]
    NonFinite,

    #[error("scene has no visible surface at one or more pixels")]
    EmptyScene,

    #[error("depth gain g(u, v) vanishes at pixel ({u}, {v})")]
    DegenerateG { u: usize, v: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
