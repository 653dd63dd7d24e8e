//! Numerical minimization of a volume-constrained semilinear energy
//!
//!   E_0(u) = ∫ ∇u A(x) ∇uᵀ dx − 2 ∫ F(x, u) dx,   u ≥ 0,   Vol_q({u > 0}) = m,
//!
//! on uniform grids in dimension 1, 2 or 3, together with the post-processing
//! needed to audit the structure of a computed minimizer: Lagrange multiplier
//! recovery, free boundary extraction, overdetermined Neumann residuals,
//! non-degeneracy and density scans, enlarged-connected-component geometry,
//! periodic compaction, and Weiss-type blow-up analysis.
//!
//! The crate is organised around the data flow of a single run:
//!
//! * [`problem`] — the data (F, A, q, m) and hypothesis audits,
//! * [`grid`] — fields, the divergence-form operator and the discrete energy,
//! * [`solve`] — penalized descent with bisection on the multiplier,
//! * [`geometry`] — support components and periodic compaction,
//! * [`diagnostics`] — pointwise checks on a computed minimizer,
//! * [`weiss`] — blow-up rescalings and the Weiss function,
//! * [`oracle`] — closed-form references used by tests and the CLI,
//! * [`scenario`] — registered, code-defined run presets.
//!
//! Everything is deterministic: reductions run in fixed index order and all
//! randomness flows from an explicit seed.

pub mod diagnostics;
pub mod error;
pub mod geom;
pub mod geometry;
pub mod grid;
pub mod oracle;
pub mod problem;
pub mod scenario;
pub mod solve;
pub mod weiss;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
