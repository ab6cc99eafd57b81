//! Functional nonlinearities Phi with growth envelopes (delta, psi) and the
//! linear compactness-surrogate coefficients gamma.
//!
//! Three catalogued shapes:
//! - superposition Phi(u)(t) = f(t, u(t)),
//! - integro-Volterra Phi(u)(t) = f(t, u(t)) + int_0^t k(t,s) u(s) ds,
//! - deviated argument Phi(u)(t) = f(t, u(theta(t))) with theta: [0,a] -> [0,a].
//!
//! Envelope conformity |Phi(u)(t)| <= delta(t) psi(|u(t)|) is a hypothesis the
//! caller asserts; `audit_envelope` can only falsify it by randomized sampling
//! inside the tube, never prove it.

use crate::certificates::TubeRadius;
use crate::error::{Error, Result};
use crate::nonlocal::BlockPartition;
use crate::numerics::NormKind;
use crate::sampling::SplitMix64;
use crate::solver::Trajectory;
use std::sync::Arc;

/// Why a user-supplied scalar field failed to evaluate.
#[derive(Clone, Debug)]
pub struct EvalFailure {
    pub message: String,
}

impl EvalFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

pub type StateFn =
    Arc<dyn Fn(f64, &[f64]) -> std::result::Result<Vec<f64>, EvalFailure> + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> std::result::Result<f64, EvalFailure> + Send + Sync>;
pub type TimeMapFn = Arc<dyn Fn(f64) -> std::result::Result<f64, EvalFailure> + Send + Sync>;
/// Infallible scalar field of time (bound data: delta, gamma, R, eta).
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Infallible scalar field of a radius (psi).
pub type RadiusFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Nonlinearity {
    Superposition { f: StateFn },
    IntegroVolterra { f: StateFn, kernel: KernelFn },
    DeviatedArgument { f: StateFn, theta: TimeMapFn },
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Nonlinearity::Superposition { .. } => "Superposition",
            Nonlinearity::IntegroVolterra { .. } => "IntegroVolterra",
            Nonlinearity::DeviatedArgument { .. } => "DeviatedArgument",
        };
        write!(f, "Nonlinearity::{name}")
    }
}

impl Nonlinearity {
    pub fn superposition(f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Nonlinearity::Superposition {
            f: Arc::new(move |t, x| Ok(f(t, x))),
        }
    }

    pub fn superposition_fallible(f: StateFn) -> Self {
        Nonlinearity::Superposition { f }
    }

    pub fn integro_volterra(
        f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        kernel: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity::IntegroVolterra {
            f: Arc::new(move |t, x| Ok(f(t, x))),
            kernel: Arc::new(move |t, s| Ok(kernel(t, s))),
        }
    }

    pub fn integro_volterra_fallible(f: StateFn, kernel: KernelFn) -> Self {
        Nonlinearity::IntegroVolterra { f, kernel }
    }

    pub fn deviated_argument(
        f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity::DeviatedArgument {
            f: Arc::new(move |t, x| Ok(f(t, x))),
            theta: Arc::new(move |t| Ok(theta(t))),
        }
    }

    pub fn deviated_argument_fallible(f: StateFn, theta: TimeMapFn) -> Self {
        Nonlinearity::DeviatedArgument { f, theta }
    }

    /// Phi(u) = 0 in dimension d.
    pub fn zero(d: usize) -> Self {
        Self::superposition(move |_, _| vec![0.0; d])
    }

    /// Superposition and integro-Volterra shapes only look backwards in time;
    /// the deviated argument may not.
    pub fn is_causal(&self) -> bool {
        !matches!(self, Nonlinearity::DeviatedArgument { .. })
    }

    /// Phi(u)(t_i). The Volterra integral uses the composite trapezoid over
    /// grid nodes up to t_i; the deviated argument interpolates u at theta(t).
    pub fn eval(&self, u: &Trajectory, node: usize) -> Result<Vec<f64>> {
        let grid = u.grid();
        let t = grid.node(node);
        let fail = |message: String| Error::NonlinearityEval { t, message };
        let out = match self {
            Nonlinearity::Superposition { f } => {
                f(t, u.value(node)).map_err(|e| fail(e.message))?
            }
            Nonlinearity::IntegroVolterra { f, kernel } => {
                let mut acc = f(t, u.value(node)).map_err(|e| fail(e.message))?;
                if node > 0 {
                    let h = grid.h();
                    let d = acc.len();
                    let mut integral = vec![0.0_f64; d];
                    for j in 0..=node {
                        let w = if j == 0 || j == node { 0.5 * h } else { h };
                        let k = kernel(t, grid.node(j)).map_err(|e| fail(e.message))?;
                        let uj = u.value(j);
                        for (c, slot) in integral.iter_mut().enumerate() {
                            *slot += w * k * uj[c];
                        }
                    }
                    for (a, b) in acc.iter_mut().zip(&integral) {
                        *a += b;
                    }
                }
                acc
            }
            Nonlinearity::DeviatedArgument { f, theta } => {
                let raw = theta(t).map_err(|e| fail(e.message))?;
                let horizon = grid.horizon();
                let slack = 1e-9 * horizon.max(1.0);
                if raw < -slack || raw > horizon + slack {
                    return Err(Error::ThetaOutOfRange {
                        t,
                        theta: raw,
                        horizon,
                    });
                }
                let clamped = raw.clamp(0.0, horizon);
                let x = u.value_at(clamped);
                f(t, &x).map_err(|e| fail(e.message))?
            }
        };
        if out.len() != u.dim() {
            return Err(Error::Dimension {
                context: format!(
                    "nonlinearity returned {} entries for state dimension {}",
                    out.len(),
                    u.dim()
                ),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("nonlinearity value at t = {t}"),
            });
        }
        Ok(out)
    }
}

/// Growth data for one component: |Phi_i(u)(t)| <= delta(t) psi(|u_i(t)|),
/// and the row (gamma_i1, ..., gamma_in) of linear comparison coefficients.
#[derive(Clone)]
pub struct GrowthEnvelope {
    pub delta: TimeFn,
    pub psi: RadiusFn,
    pub gamma_row: Vec<TimeFn>,
}

impl GrowthEnvelope {
    /// Scalar envelope with a single gamma coefficient.
    pub fn scalar(
        delta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            delta: Arc::new(delta),
            psi: Arc::new(psi),
            gamma_row: vec![Arc::new(gamma)],
        }
    }
}

impl std::fmt::Debug for GrowthEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrowthEnvelope")
            .field("gamma_row_len", &self.gamma_row.len())
            .finish_non_exhaustive()
    }
}

/// Randomized falsification of the growth envelope inside the tube.
///
/// Samples `trials` random trajectories with |u_i(t)| <= R_i(t) per component
/// and returns the worst observed value of
/// `|Phi_i(u)(t)| - delta_i(t) psi_i(|u_i(t)|)` over trials, nodes, and
/// components. A nonpositive result means no violation was observed; it is
/// not a proof.
pub fn audit_envelope(
    phi: &Nonlinearity,
    envelopes: &[GrowthEnvelope],
    tube: &TubeRadius,
    partition: &BlockPartition,
    norm_kind: NormKind,
    grid: crate::evolution::TimeGrid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    assert!(trials >= 1, "audit needs at least one trial");
    if envelopes.len() != partition.n_components() {
        return Err(Error::Dimension {
            context: format!(
                "{} envelopes for {} components",
                envelopes.len(),
                partition.n_components()
            ),
        });
    }
    let d = partition.dim();
    let n_nodes = grid.num_nodes();
    let mut rng = SplitMix64::new(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut values = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let t = grid.node(i);
            let mut x = vec![0.0_f64; d];
            for comp in 0..partition.n_components() {
                let range = partition.range(comp);
                let mut block: Vec<f64> = (0..range.len()).map(|_| rng.next_symmetric()).collect();
                let norm = crate::numerics::vec_norm(&block, norm_kind);
                let radius = tube.eval(comp, t)?;
                let target = rng.next_f64() * radius;
                if norm > 0.0 {
                    for b in &mut block {
                        *b *= target / norm;
                    }
                }
                for (slot, v) in x[range].iter_mut().zip(&block) {
                    *slot = *v;
                }
            }
            values.push(x);
        }
        let u = Trajectory::from_values(grid, values)?;
        for i in 0..n_nodes {
            let t = grid.node(i);
            let phi_val = phi.eval(&u, i)?;
            for comp in 0..partition.n_components() {
                let env = &envelopes[comp];
                let phi_norm = partition.component_norm(&phi_val, comp, norm_kind);
                let u_norm = partition.component_norm(u.value(i), comp, norm_kind);
                let bound = (env.delta)(t) * (env.psi)(u_norm);
                worst = worst.max(phi_norm - bound);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::TimeGrid;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 100).unwrap()
    }

    fn tube_const(r: f64) -> TubeRadius {
        TubeRadius::constant(r, 1)
    }

    #[test]
    fn superposition_zero_and_identity() {
        let g = grid();
        let u = Trajectory::constant(g, &[3.0]).unwrap();
        let zero = Nonlinearity::zero(1);
        assert_eq!(zero.eval(&u, 40).unwrap(), vec![0.0]);
        let ident = Nonlinearity::superposition(|_, x| x.to_vec());
        for i in [0, 13, 100] {
            assert_eq!(ident.eval(&u, i).unwrap(), vec![3.0]);
        }
    }

    #[test]
    fn volterra_integral_of_ramp() {
        // f = 0, k = 1, u(t) = t: at t = 1 the integral is 1/2 up to h^2.
        let g = grid();
        let u = Trajectory::from_values(g, g.nodes().map(|t| vec![t]).collect()).unwrap();
        let phi = Nonlinearity::integro_volterra(|_, _| vec![0.0], |_, _| 1.0);
        let got = phi.eval(&u, 100).unwrap()[0];
        let h = g.h();
        assert!((got - 0.5).abs() <= h * h, "got {got}");
    }

    #[test]
    fn volterra_converges_at_second_order() {
        // k(t,s) = s, u = 1: int_0^1 s ds = 1/2; trapezoid error ~ C h^2.
        let mut errs = Vec::new();
        for n in [50usize, 100, 200] {
            let g = TimeGrid::new(1.0, n).unwrap();
            let u = Trajectory::constant(g, &[1.0]).unwrap();
            let phi = Nonlinearity::integro_volterra(|_, _| vec![0.0], |_, s| s * s);
            let got = phi.eval(&u, n).unwrap()[0];
            errs.push((got - 1.0 / 3.0).abs());
        }
        let slope1 = (errs[0] / errs[1]).log2();
        let slope2 = (errs[1] / errs[2]).log2();
        assert!((slope1 - 2.0).abs() < 0.3, "slope {slope1}");
        assert!((slope2 - 2.0).abs() < 0.3, "slope {slope2}");
    }

    #[test]
    fn deviated_argument_reads_shifted_state() {
        let g = grid();
        let u = Trajectory::from_values(g, g.nodes().map(|t| vec![t]).collect()).unwrap();
        let phi = Nonlinearity::deviated_argument(|_, x| x.to_vec(), |t| 0.5 * t);
        let got = phi.eval(&u, 100).unwrap()[0];
        assert!((got - 0.5).abs() < 1e-12);
        assert!(!phi.is_causal());
    }

    #[test]
    fn deviated_argument_rejects_out_of_range_theta() {
        let g = grid();
        let u = Trajectory::constant(g, &[0.0]).unwrap();
        let phi = Nonlinearity::deviated_argument(|_, x| x.to_vec(), |t| 2.0 * t);
        assert!(matches!(
            phi.eval(&u, 100),
            Err(Error::ThetaOutOfRange { .. })
        ));
    }

    #[test]
    fn eval_failure_reports_offending_time() {
        let g = grid();
        let u = Trajectory::constant(g, &[1.0]).unwrap();
        let phi = Nonlinearity::superposition_fallible(Arc::new(|t, _| {
            if t > 0.5 {
                Err(EvalFailure::new("domain error"))
            } else {
                Ok(vec![0.0])
            }
        }));
        assert!(phi.eval(&u, 40).is_ok());
        match phi.eval(&u, 60) {
            Err(Error::NonlinearityEval { t, .. }) => assert!((t - 0.6).abs() < 1e-12),
            other => panic!("expected eval error, got {other:?}"),
        }
    }

    #[test]
    fn linear_superposition_is_homogeneous() {
        let g = grid();
        let phi = Nonlinearity::superposition(|_, x| x.iter().map(|v| 2.0 * v).collect());
        let u = Trajectory::from_values(g, g.nodes().map(|t| vec![t + 0.3]).collect()).unwrap();
        let cu =
            Trajectory::from_values(g, g.nodes().map(|t| vec![2.5 * (t + 0.3)]).collect()).unwrap();
        for i in [0, 30, 100] {
            let a = phi.eval(&cu, i).unwrap()[0];
            let b = 2.5 * phi.eval(&u, i).unwrap()[0];
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_passes_zero_nonlinearity() {
        let g = grid();
        let phi = Nonlinearity::zero(1);
        let envs = [GrowthEnvelope::scalar(|_| 0.5, |s| s.max(0.1), |_| 0.0)];
        let part = BlockPartition::scalar(1);
        let v = audit_envelope(
            &phi,
            &envs,
            &tube_const(1.0),
            &part,
            NormKind::LInf,
            g,
            20,
            7,
        )
        .unwrap();
        assert!(v <= 0.0);
    }

    #[test]
    fn audit_equality_case_has_no_violation() {
        // f(t,x) = x with delta = 1, psi(s) = s: |Phi| = delta psi exactly.
        let g = grid();
        let phi = Nonlinearity::superposition(|_, x| x.to_vec());
        let envs = [GrowthEnvelope::scalar(|_| 1.0, |s| s, |_| 1.0)];
        let part = BlockPartition::scalar(1);
        let v = audit_envelope(
            &phi,
            &envs,
            &tube_const(1.0),
            &part,
            NormKind::LInf,
            g,
            30,
            11,
        )
        .unwrap();
        assert!(v <= 1e-12, "violation {v}");
    }

    #[test]
    fn audit_flags_doubling_map() {
        // f(t,x) = 2x against delta = 1, psi(s) = s: violation ~ max |x|.
        let g = grid();
        let phi = Nonlinearity::superposition(|_, x| x.iter().map(|v| 2.0 * v).collect());
        let envs = [GrowthEnvelope::scalar(|_| 1.0, |s| s, |_| 2.0)];
        let part = BlockPartition::scalar(1);
        let v = audit_envelope(
            &phi,
            &envs,
            &tube_const(1.0),
            &part,
            NormKind::LInf,
            g,
            50,
            13,
        )
        .unwrap();
        assert!(v > 0.5, "expected a clear violation, got {v}");
    }

    #[test]
    fn audit_is_deterministic_in_the_seed() {
        let g = grid();
        let phi = Nonlinearity::superposition(|t, x| vec![t * x[0]]);
        let envs = [GrowthEnvelope::scalar(|_| 1.0, |s| s + 0.1, |_| 1.0)];
        let part = BlockPartition::scalar(1);
        let run = || {
            audit_envelope(
                &phi,
                &envs,
                &tube_const(2.0),
                &part,
                NormKind::LInf,
                g,
                25,
                99,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
