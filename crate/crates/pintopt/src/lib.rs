//! Structured linear algebra and preconditioned Krylov solvers for the
//! all-at-once solution of parabolic distributed optimal control problems.
//!
//! The library discretizes the heat-equation control problem
//!
//! ```text
//!   min_{y,u}  1/2 ||y - g||^2 + gamma/2 ||u||^2
//!   s.t.       y_t - div(a grad y) = f + u,   y(0) = y0,
//! ```
//!
//! with a θ-method in time and a 5-point finite-difference Laplacian in
//! space, eliminates the control, and solves the coupled state/adjoint
//! system for all time steps at once. The solver stack is matrix-free:
//! block ω-circulant preconditioners are applied through FFT-based time
//! transforms, a 2×2 block eigen-factorization per time frequency, and
//! shifted-Laplacian inner solves (fast sine transform, or geometric
//! multigrid V-cycles at a count calibrated per frequency). Dense spectral
//! oracles back every structured component at small sizes.
//!
//! Modules, bottom of the stack first:
//!
//! - [`discretize`] — problem specs, grids, right-hand sides, recovery of
//!   state/adjoint/control, and the discrete error measure.
//! - [`structured`] — time-direction structure: Toeplitz generators,
//!   ω-circulant eigenvalues and transforms, DST-I, and the four-block
//!   factorization used by the preconditioners.
//! - [`multigrid`] — geometric multigrid V-cycle for shifted Laplacians.
//! - [`operators`] — the matrix-free system operator and preconditioner
//!   applications.
//! - [`krylov`] — right-preconditioned GMRES and preconditioned MINRES.
//! - [`spectra`] — dense oracles: assembled matrices, eigenvalue interval
//!   checks, cluster counts, ranks, and figure data.

pub mod discretize;
pub mod krylov;
pub mod multigrid;
pub mod operators;
pub mod spectra;
pub mod structured;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A problem specification failed validation.
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
    /// The diffusion coefficient is not strictly positive where sampled.
    #[error("non-positive diffusion coefficient at face ({x:.6}, {y:.6}): {value}")]
    NonPositiveCoefficient { x: f64, y: f64, value: f64 },
    /// An operation requiring the fast-sine-transform path was requested for
    /// an operator that the DST does not diagonalize.
    #[error("operator is not DST-diagonalizable (requires constant coefficient and Dirichlet boundary): {0}")]
    NotDstDiagonalizable(String),
    /// Mismatched vector/operator shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// A dense-oracle routine was asked to exceed its size guard.
    #[error("dense oracle size guard exceeded: 2mn = {actual} > {limit}")]
    DenseSizeGuard { actual: usize, limit: usize },
    /// An operator handed to a routine violates that routine's contract
    /// (e.g. a non-Hermitian matrix where a Hermitian one is required).
    #[error("operator contract violation: {0}")]
    ContractViolation(String),
    /// A numerical process produced non-finite values or broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
