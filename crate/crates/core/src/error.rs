//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {context}")]
    Dimension { context: String },

    #[error(
        "entry ({row},{col}) = {value:e} is negative; spectral radius requires nonnegative entries"
    )]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error(
        "power iteration did not converge within {max_iter} iterations; last estimate {last:e}"
    )]
    PowerIterationStalled { max_iter: usize, last: f64 },

    #[error("singular matrix: pivot {pivot:e} below threshold at elimination step {index}")]
    Singular { index: usize, pivot: f64 },

    #[error("spectral-radius consistency violation: rho = {rho:e} < 1 but I - H is singular")]
    RadiusTrioInconsistent { rho: f64 },

    #[error("invalid grid: {reason}")]
    Grid { reason: String },

    #[error("time {t:e} is not a grid node")]
    OffGrid { t: f64 },

    #[error("propagator requires s <= t, got s = {s:e}, t = {t:e}")]
    TimeOrder { t: f64, s: f64 },

    #[error("propagator matrix is singular at node {node} (t = {t:e}); the grid is too coarse for this generator")]
    SingularPropagator { node: usize, t: f64 },

    #[error("nonlocal resolvent does not exist: x -> x - F(T(.,0)x) is singular")]
    ResolventSingular,

    #[error("resolvent identity defect {defect:e} exceeds 1e-10; inversion is unreliable")]
    ResolventDefect { defect: f64 },

    #[error("psi must be positive on the integration range; psi({tau:e}) = {value:e}")]
    PsiNotPositive { tau: f64, value: f64 },

    #[error("quadrature failed: {reason}")]
    Quadrature { reason: String },

    #[error("nonlinearity evaluation failed at t = {t:e}: {message}")]
    NonlinearityEval { t: f64, message: String },

    #[error("deviated argument theta({t:e}) = {theta:e} falls outside [0, {horizon:e}]")]
    ThetaOutOfRange { t: f64, theta: f64, horizon: f64 },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("Picard iteration diverged: residual grew from {initial:e} to {last:e} after {} evaluations", history.len())]
    Diverged {
        initial: f64,
        last: f64,
        history: Vec<f64>,
    },

    #[error("shooting found no root: Newton stalled with |g| = {residual:e} after {steps} steps")]
    NewtonStalled { residual: f64, steps: usize },

    #[error("oracle refuses this problem: {reason}")]
    OracleRefusal { reason: String },

    #[error("reference integration blew up at t = {t:e} (|u| > 1e12)")]
    IvpBlowUp { t: f64 },

    #[error("invalid configuration: {reason}")]
    Config { reason: String },
}
