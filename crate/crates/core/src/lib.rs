//! Numerical laboratory for weighted transfer operators of piecewise-expanding
//! interval maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: piecewise-constant densities on a uniform grid of `(0,1)`,
//!   their TV/BV/Lp norms and mollification.
//! - [`gbv`]: constructive upper estimates of the generalised bounded
//!   variation norm, clamped families and the layer decomposition of an
//!   observable.
//! - [`maps`]: branched expanding maps, weights, hypothesis checks and the
//!   cocycle growth rates `lambda_1`, `lambda_2`.
//! - [`operator`]: the weighted transfer operator on grid densities, its
//!   smoothed-weight variant and Ulam matrices.
//! - [`spectral`]: Arnoldi eigensolver, radius bounds, the `lambda(n)`
//!   sequence and Lasota–Yorke style diagnostics.
//! - [`cli`]: configuration parsing and the command implementations behind
//!   the `wtolab` binary.

#![forbid(unsafe_code)]
// `!(x > y)` is used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod gbv;
pub mod maps;
pub mod measures;
pub mod operator;
pub mod quad;
pub mod spectral;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid resolution mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("x = {x} is not inside a listed branch (nearest boundaries {lo} and {hi})")]
    SingularPoint { x: f64, lo: f64, hi: f64 },

    #[error("orbit hits the singular set or the omitted tail at iterate {iterate} (x = {x})")]
    OrbitSingular { iterate: usize, x: f64 },

    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),

    #[error("quadrature tolerance not met in cell {cell}, branch {branch}: {detail}")]
    Tolerance {
        cell: usize,
        branch: usize,
        detail: String,
    },

    #[error("refusing to run: hypothesis failed: {0}")]
    HypothesisFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
