use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The enclosing interval straddles a digit boundary `1/k`; refine and retry.
    #[error("ambiguous continued-fraction digit at precision {precision_bits} bits")]
    AmbiguousDigit { precision_bits: u32 },

    #[error("input is rational: expansion terminated after {terms} digits")]
    RationalInput { terms: usize },

    #[error("precision exhausted at {precision_bits} bits")]
    PrecisionExhausted { precision_bits: u32 },

    #[error("approximation bounds undecidable at index {0}")]
    Undecidable(usize),

    #[error("table has {available} entries, {required} required")]
    InsufficientTable { required: usize, available: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("log-space representation overflowed at index {0}")]
    OverflowEvenInLogSpace(usize),

    #[error("conditional gradient did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("node sets use different clamp distances")]
    IncompatibleClamp,

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
