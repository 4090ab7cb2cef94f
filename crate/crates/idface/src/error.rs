//! Crate-wide error type.
//!
//! One enum covers every module so results compose across the pipeline
//! (transform → packing → encryption → protocol) without conversion layers.
//! Variants carry enough context to act on the failure; none capture secrets.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// Input is structurally valid but meaningless to the operation, e.g. a
    /// ternarization where the k-th largest magnitude is zero (the sign of a
    /// zero coordinate is undefined) or a non-finite feature value.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Two vectors or parameter sets that must agree in dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Dimension required by the receiving side.
        expected: usize,
        /// Dimension actually supplied.
        got: usize,
    },

    /// A scalar parameter lies outside its documented domain.
    #[error("parameter out of range: {0}")]
    RangeViolation(String),

    /// Angle outside the domain of the requested operation.
    #[error("invalid angle: {0}")]
    InvalidAngle(String),

    /// The plaintext slot cannot hold even one packed template at the
    /// requested sparsities.
    #[error("slot capacity too small: {0}")]
    CapacityTooSmall(String),

    /// More templates offered to a packing than its slot capacity `m` allows.
    #[error("too many templates: capacity {capacity}, got {got}")]
    TooManyTemplates {
        /// Templates the packing can hold.
        capacity: usize,
        /// Templates supplied.
        got: usize,
    },

    /// Integer arithmetic would exceed its proven bound.
    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    /// Prime search exhausted its attempt budget.
    #[error("prime generation failed after {attempts} attempts")]
    PrimeGenerationFailure {
        /// Candidates tested before giving up.
        attempts: usize,
    },

    /// A plaintext or accumulated value does not fit the backend's slot.
    #[error("slot overflow: {0}")]
    SlotOverflow(String),

    /// Operation requires key material the caller does not hold, or mixes
    /// ciphertexts from different keys.
    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    /// Two pipeline stages disagree on protocol parameters (d, α, β, packing
    /// geometry, backend identity).
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    /// An identity label was enrolled twice.
    #[error("duplicate identity: {0}")]
    DuplicateId(String),

    /// The transport layer failed to move a frame.
    #[error("transport failure: {0}")]
    TransportFailure(String),

    /// Frame bytes violate the framing layout (bad magic, truncated header,
    /// short payload).
    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    /// Frame type byte does not name a known message.
    #[error("unknown message type: {0:#04x}")]
    UnknownMessageType(u8),

    /// Declared and actual payload lengths disagree.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Adaptive quadrature failed to reach its tolerance within the depth
    /// budget.
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    /// The plaintext mock backend was constructed without the explicit
    /// insecure-mode flag.
    #[error("insecure backend refused: {0}")]
    InsecureBackendRefused(String),

    /// Persisted state (metadata document, key file, template file) failed to
    /// parse.
    #[error("malformed persisted state: {0}")]
    Persistence(String),

    /// Underlying I/O failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_includes_context() {
        let e = Error::DimensionMismatch {
            expected: 512,
            got: 16,
        };
        assert_eq!(e.to_string(), "dimension mismatch: expected 512, got 16");
        let e = Error::UnknownMessageType(0xAB);
        assert!(e.to_string().contains("0xab"));
    }

    #[test]
    fn io_errors_convert() {
        fn open_missing() -> Result<String> {
            Ok(std::fs::read_to_string("/definitely/not/here")?)
        }
        assert!(matches!(open_missing(), Err(Error::Io(_))));
    }
}
