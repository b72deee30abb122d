use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no lattice cell lies fully inside the cross-section")]
    NoInteriorCell,

    #[error("cell ({0}, {1}) is not an interior cell of the domain")]
    MissingCell(i64, i64),

    #[error("point {0:?} is too close to the domain boundary for the stencil")]
    StencilOutOfDomain([f64; 3]),

    #[error("non-finite field value at {0:?}")]
    NonFinite([f64; 3]),

    #[error("translation of length {len} exceeds the admissible bound {bound}")]
    TranslationTooLarge { len: f64, bound: f64 },

    #[error("director {0:?} is within the pole cylinder (Σ₁²+Σ₂² < η²)")]
    Pole([f64; 3]),

    #[error("no pre-rotation keeps the director field away from the poles (best margin {0:e})")]
    NoPreRotation(f64),

    #[error("matrix is not orientation preserving (det = {0:e})")]
    NotOrientationPreserving(f64),

    #[error("rotation extraction failed on cell ({0}, {1}): averaged gradient has det ≤ 0")]
    ExtractionFailed(i64, i64),

    #[error("boundary trace violated by {0:e}")]
    TraceViolation(f64),

    #[error("rate fit needs at least 3 positive values: {0}")]
    Fit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
