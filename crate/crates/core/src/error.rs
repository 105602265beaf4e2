//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by tensor, learning, tracking and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Operands disagree on channel count or spatial dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An inverse transform that must be real-valued came back with a
    /// relative imaginary residue above tolerance.
    #[error("inverse transform has imaginary residue {residue:.3e} (tolerance {tolerance:.3e})")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    /// The target rectangle is too small to split into the patch grid.
    #[error("target of {height}x{width} cells cannot be split into a {grid}x{grid} patch grid")]
    TargetTooSmall {
        height: usize,
        width: usize,
        grid: usize,
    },

    /// A reliability weight lies outside the configured box constraint.
    #[error("reliability weight beta[{index}] = {value} outside [{min}, {max}]")]
    BetaOutOfRange {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A requested extraction region or target box is empty, inverted or
    /// entirely outside the frame.
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    /// A synthetic motion schedule pushes the target outside the frame.
    #[error("target leaves frame at index {frame}: box ({x:.1}, {y:.1}, {w:.1}, {h:.1})")]
    TargetLeavesFrame {
        frame: usize,
        x: f64,
        y: f64,
        w: f64,
        h: f64,
    },

    /// A box with non-positive width or height where a proper box is
    /// required.
    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A solver iterate or input contains NaN or infinite values.
    #[error("non-finite values encountered in {0}")]
    NotFinite(String),

    /// A numeric parameter is out of its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
