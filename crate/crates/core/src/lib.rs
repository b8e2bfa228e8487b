//! Fundamental domains and presentations of Hilbert modular groups.
//!
//! For a square-free integer `k > 1` with ring of integers `R = Z[w]` of
//! `Q(sqrt k)` (class number one), this crate computes a fundamental domain
//! for `PSL2(R)` acting on `H^2 x H^2`, its side pairings, edges and edge
//! cycles, and a finite presentation of the group, with every group-theoretic
//! claim verified in exact arithmetic.
//!
//! Numeric work (root finding for the floor height, Newton solves for edge
//! witnesses) runs on `f64`; everything the group theory depends on (memberships,
//! side equalities, relator identities) is re-checked over `Q(sqrt k)`.
//! The evaluation formulas are generic over the scalar, so the exact and the
//! floating lane share one implementation; see [`geometry::Scalar`].

pub mod domain;
pub mod geometry;
pub mod oracle;
pub mod presentation;
pub mod ring;

pub use geometry::{FloatPoint, Point, SRPoint, Scalar};
pub use ring::{FieldCtx, GroupElem, Int, KNum, QuadInt, Rat};

/// Exact point of `H^2 x H^2`: all four coordinates live in `Q(sqrt k)`.
pub type ExactPoint = Point<KNum>;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// `k` is not a square-free integer greater than one.
    InvalidField(String),
    /// `k` is fine as a field but not on the class-number-one list this
    /// pipeline requires.
    UnsupportedField(String),
    NotUnit(String),
    NotCoprime(String),
    CompletionFailed(String),
    IterationCap(String),
    Degeneracy(String),
    Pipeline(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidField(m) => write!(f, "invalid field: {m}"),
            Error::UnsupportedField(m) => write!(f, "unsupported field: {m}"),
            Error::NotUnit(m) => write!(f, "not a unit: {m}"),
            Error::NotCoprime(m) => write!(f, "not coprime: {m}"),
            Error::CompletionFailed(m) => write!(f, "row completion failed: {m}"),
            Error::IterationCap(m) => write!(f, "iteration cap exceeded: {m}"),
            Error::Degeneracy(m) => write!(f, "degeneracy: {m}"),
            Error::Pipeline(m) => write!(f, "pipeline failure: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
