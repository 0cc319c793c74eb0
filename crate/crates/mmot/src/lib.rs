//! Discrete multi-marginal optimal transport with verifiable optimality
//! certificates.
//!
//! The library solves the linear-programming formulation of the
//! multi-marginal transport problem on product grids, recovers dual
//! potentials that certify optimality, and checks the structural conditions
//! under which the optimal plan is unique and concentrated on a graph over
//! the first axis: cyclical monotonicity of the support, potential-based
//! equality sets, gradient-injectivity probes, and an envelope identity
//! relating potential slopes to cost gradients.
//!
//! Modules:
//! - [`measures`]: grids, discretized marginals, product indexing.
//! - [`costs`]: the cost-family catalog with analytic partials and
//!   structural-hypothesis checkers.
//! - [`solver`]: exact LP (transportation simplex with strictly
//!   complementary duals), log-domain entropic scaling, and a
//!   structure-exploiting variant for block-decomposable costs.
//! - [`duality`]: splitting-gap evaluation, conjugate potential updates,
//!   certificate verification.
//! - [`verify`]: cyclical monotonicity, graphicality, equality-set and
//!   twist probes, envelope checks.
//! - [`harness`]: experiment configs, the verification pipeline, batteries,
//!   and benchmark tables.

pub mod costs;
pub mod duality;
pub mod harness;
pub mod measures;
pub mod solver;
pub mod verify;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate density")]
    DegenerateDensity,

    #[error("grid needs at least 2 cells, got {0}")]
    GridTooSmall(usize),

    #[error("marginal invalid: {0}")]
    InvalidMarginal(String),

    #[error("cost family invalid: {0}")]
    InvalidCost(String),

    #[error("arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("problem too large: {cells} cells exceeds cap {cap}; use the entropic solver")]
    TooLarge { cells: usize, cap: usize },

    #[error("epsilon must be positive")]
    NonPositiveEpsilon,

    #[error("scaling did not converge in {max_iter} sweeps: violation {violation:e} > tol {tol:e}")]
    NoConvergence {
        max_iter: usize,
        violation: f64,
        tol: f64,
    },

    #[error("no block structure")]
    NoBlockStructure,

    #[error("need >= 2 trials")]
    TooFewTrials,

    #[error("work cap exceeded: {estimate} cost evaluations > cap {cap}; reduce p_max or sample")]
    WorkCapExceeded { estimate: u128, cap: u128 },

    #[error("interior required")]
    InteriorRequired,

    #[error("equality point required: |gap| = {gap:e} exceeds tol {tol:e}")]
    NotEqualityPoint { gap: f64, tol: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config invalid: {0}")]
    InvalidConfig(String),

    #[error("duplicate config name: {0}")]
    DuplicateConfigName(String),

    #[error("empty sizes list")]
    EmptySizes,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
