use crate::tree::FieldRole;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tree height {n} outside supported range 1..={max}")]
    HeightOutOfRange { n: usize, max: usize },

    #[error("vertex index {index} out of range at depth {depth}")]
    VertexOutOfRange { depth: usize, index: u64 },

    #[error("depth {depth} exceeds tree height {n}")]
    DepthOutOfRange { depth: usize, n: usize },

    #[error("expected {expected} values for a {role:?} field on a height-{n} tree, got {actual}")]
    FieldLength {
        role: FieldRole,
        n: usize,
        expected: usize,
        actual: usize,
    },

    #[error("expected a {expected:?} field, got {actual:?}")]
    WrongRole {
        expected: FieldRole,
        actual: FieldRole,
    },

    #[error("operands live on trees of different heights ({left} vs {right})")]
    HeightMismatch { left: usize, right: usize },

    #[error("edge weight at depth {depth} must be positive and finite, got {value}")]
    InvalidWeight { depth: usize, value: f64 },

    #[error("exponent p must be finite and > 1, got {p}")]
    InvalidExponent { p: f64 },

    #[error("invalid escape-probability vector: {reason}")]
    InvalidEscape { reason: String },

    #[error("{what} failed to converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("random walk exceeded the {cap}-step cap")]
    WalkTooLong { cap: usize },

    #[error("dense edge kernel supported for heights <= {cap}, got {n}")]
    KernelTooLarge { n: usize, cap: usize },

    #[error("kernel entry ({row},{col}) is negative ({value}); estimator requires a nonnegative kernel")]
    NegativeKernelEntry { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {what} has length {actual}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} must be positive and finite, got {value} at position {index}")]
    InvalidEntry {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("the root has no parent edge")]
    NotAnEdge,
}

pub type Result<T> = std::result::Result<T, Error>;
