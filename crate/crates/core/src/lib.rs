//! Solver-plus-certificate engine for nonlocal Cauchy problems
//!
//! The problem class is `u'(t) = A(t)u(t) + Phi(u)(t)` on `[0, a]` with the
//! nonlocal condition `u(0) = F(u)`, posed in finite dimension. The crate
//! provides:
//!
//! - [`numerics`]: small dense linear algebra (norms, inverses, spectral radius),
//! - [`expr`]: the arithmetic expression language used by problem files,
//! - [`evolution`]: the propagator T(t,s) generated by a bounded matrix family,
//! - [`nonlocal`]: the linear condition F, its supports, and the resolvent B,
//! - [`nonlinearity`]: the functional nonlinearities Phi with growth envelopes,
//! - [`certificates`]: numeric evaluation of the sufficient existence conditions,
//! - [`solver`]: the mild-solution operator N and damped Picard iteration,
//! - [`oracle`]: independent reference solvers for cross-checking.

pub mod certificates;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod nonlinearity;
pub mod nonlocal;
pub mod numerics;
pub mod oracle;
pub mod solver;

pub(crate) mod sampling;

pub use error::{Error, Result};
