use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An operand had the wrong shape.
    #[error("dimension mismatch for {operand}: expected {expected}, got {actual}")]
    Dimension {
        operand: &'static str,
        expected: String,
        actual: String,
    },
    /// The caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A NaN or infinity showed up where a finite number is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn dimension(
        operand: &'static str,
        expected: impl core::fmt::Display,
        actual: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Dimension {
            operand,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
