//! Exact-arithmetic laboratory for rows of non-signalling boxes.
//!
//! The crate models bipartite box systems (`boxes`), generates and checks
//! the linear non-signalling constraint families that distinguish
//! sequential-use adversary models (`constraints`), constructs the
//! row-shift partition attack on hashed box outputs and its distance
//! bound (`attack`), and computes optimal attacks by exact rational
//! linear programming (`lp`).
//!
//! Everything is exact: probabilities, constraint coefficients, LP pivots
//! and reported distances are arbitrary-precision rationals. There are no
//! tolerances anywhere; two quantities are either equal or they are not.

pub mod attack;
pub mod bits;
pub mod boxes;
pub mod constraints;
pub mod lp;
pub mod rational;

pub use bits::BitString;
pub use boxes::{BoxSystem, Side};
pub use rational::Rational;

/// Crate-wide error type.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// Malformed textual input (rationals, bit strings, hex truth tables).
    #[error("parse error: {0}")]
    Parse(String),

    /// Malformed system/report file contents.
    #[error("format error: {0}")]
    Format(String),

    /// Argument outside its mathematical domain (eps range, box count,
    /// wrong arity for an operation).
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense vector has the wrong length for the declared size.
    #[error("size mismatch: expected {expected} entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    /// A table failed box-system validation (cell bounds, normalization).
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// A marginal is ill-defined: the discarded inputs `input_a` and
    /// `input_b` induce different distributions.
    #[error("signalling table: {context} differs between discarded inputs {input_a} and {input_b}")]
    Signalling {
        context: String,
        input_a: String,
        input_b: String,
    },

    /// A weighted partition element exceeds the source system at a cell.
    #[error("cell bound violated at (u={u}, v={v}, x={x}, y={y}): {detail}")]
    CellBound {
        u: String,
        v: String,
        x: String,
        y: String,
        detail: String,
    },

    /// A scan or LP size cap was exceeded without an explicit override.
    #[error("size cap exceeded: n = {n} > cap {cap}; {hint}")]
    CapExceeded { n: usize, cap: usize, hint: String },

    /// The LP solver reached a state the attack formulation excludes.
    #[error("internal LP error: {0}")]
    LpInternal(String),
}
