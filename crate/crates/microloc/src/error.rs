//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors reported by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("frequency query with zero vector")]
    ZeroFrequency,

    #[error("pullback direction annihilated by the transpose map (region meets the set of normals)")]
    NormalsIntersect,

    #[error("insufficient octaves: fit window has {usable} points, need at least {needed}")]
    InsufficientOctaves { usable: usize, needed: usize },

    #[error("sequence too short: got {got} members, need at least {required}")]
    EmptySequence { got: usize, required: usize },

    #[error("general quantization path over budget: {cost} > {budget} inner products")]
    SizeLimit { cost: u128, budget: u128 },

    #[error("channel mismatch: operator is {op_out}x{op_in}, field has {field} channels")]
    ChannelMismatch {
        op_out: usize,
        op_in: usize,
        field: usize,
    },

    #[error("rank {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("quadrature did not converge to relative {target:e} (best gap {best:e})")]
    QuadratureFailure { target: f64, best: f64 },

    #[error("bin and patch geometries do not match: {0}")]
    GeometryMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
